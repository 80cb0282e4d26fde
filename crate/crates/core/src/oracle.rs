//! Exact ground truth from a known generative model: Bayes posteriors,
//! marginal density and the two sparsity measures.
//!
//! Every product of prior and likelihood is formed in log space. The regime
//! of interest (low density, one cluster dominating) is exactly where the
//! plain products underflow, and normalizing log-weights by their maximum
//! keeps posteriors exact there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{Mixture, Mixture1D, Mixture2D};
use crate::math::softmax_in_place;

/// Tolerance on `sum(probs) == 1` for a valid posterior vector.
pub const POSTERIOR_SUM_TOL: f64 = 1e-9;

/// Floor applied to `ln(weight)` inside H_G sparsity so zero-weight clusters
/// contribute a large finite term instead of `+inf`. `e^-745` is below the
/// smallest positive `f64`.
pub const HG_LN_WEIGHT_FLOOR: f64 = -745.0;

/// A probability vector over `K` categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PosteriorVector(Vec<f64>);

impl PosteriorVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("posterior vector"));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidModel(format!("probability {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > POSTERIOR_SUM_TOL {
            return Err(Error::InvalidModel(format!("probabilities sum to {sum}")));
        }
        Ok(Self(probs))
    }

    /// Normalize unnormalized log-weights. At least one entry must be finite.
    pub fn from_log_weights(mut log_weights: Vec<f64>) -> Self {
        softmax_in_place(&mut log_weights);
        Self(log_weights)
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &p)| if p > best.1 { (k, p) } else { best })
            .0
    }
}

impl std::ops::Index<usize> for PosteriorVector {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

impl TryFrom<Vec<f64>> for PosteriorVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PosteriorVector> for Vec<f64> {
    fn from(p: PosteriorVector) -> Self {
        p.0
    }
}

fn check_finite<M: Mixture>(x: M::Point) -> Result<()> {
    let coords = M::coords(x);
    if coords.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("evaluation point {coords:?}")))
    }
}

/// `p(y = k | x) = w_k phi_k(x) / sum_j w_j phi_j(x)` for any mixture.
pub fn posterior<M: Mixture>(model: &M, x: M::Point) -> Result<PosteriorVector> {
    check_finite::<M>(x)?;
    Ok(PosteriorVector::from_log_weights(model.weighted_ln_densities(x)))
}

pub fn posterior_1d(model: &Mixture1D, x: f64) -> Result<PosteriorVector> {
    posterior(model, x)
}

pub fn posterior_2d(model: &Mixture2D, v: [f64; 2]) -> Result<PosteriorVector> {
    posterior(model, v)
}

/// `|w1 phi1 - w2 phi2| / (w1 phi1 + w2 phi2)`, in `[0, 1]`.
///
/// With `a`, `b` the two log weighted densities the ratio equals
/// `tanh(|a - b| / 2)`, which stays exact when both products underflow.
pub fn sparsity_two_cluster<M: Mixture>(model: &M, x: M::Point) -> Result<f64> {
    check_finite::<M>(x)?;
    let k = model.num_components();
    if k != 2 {
        return Err(Error::NotTwoCluster(k));
    }
    let lw = model.weighted_ln_densities(x);
    let gap = (lw[0] - lw[1]).abs();
    if gap.is_nan() {
        // both -inf cannot happen for normalized weights
        return Ok(0.0);
    }
    Ok((0.5 * gap).tanh())
}

/// H_G sparsity `-sum_k ln(w_k phi_k(x))`.
///
/// Unbounded, and negative wherever weighted densities exceed 1. Zero weights
/// are floored at [`HG_LN_WEIGHT_FLOOR`].
pub fn sparsity_hg<M: Mixture>(model: &M, x: M::Point) -> Result<f64> {
    check_finite::<M>(x)?;
    Ok(-model
        .weights()
        .iter()
        .enumerate()
        .map(|(k, &w)| w.ln().max(HG_LN_WEIGHT_FLOOR) + model.component_ln_pdf(k, x))
        .sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityKind {
    TwoCluster,
    Hg,
}

/// Density, sparsity and true posterior at one location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorReport {
    pub x: Vec<f64>,
    pub density: f64,
    pub sparsity: f64,
    pub sparsity_kind: SparsityKind,
    pub posterior: PosteriorVector,
}

/// Two-cluster sparsity when `K = 2`, otherwise H_G.
pub fn factor_report<M: Mixture>(model: &M, x: M::Point) -> Result<FactorReport> {
    let (sparsity, sparsity_kind) = if model.num_components() == 2 {
        (sparsity_two_cluster(model, x)?, SparsityKind::TwoCluster)
    } else {
        (sparsity_hg(model, x)?, SparsityKind::Hg)
    };
    Ok(FactorReport {
        x: M::coords(x),
        density: model.density(x),
        sparsity,
        sparsity_kind,
        posterior: posterior(model, x)?,
    })
}
