//! Gaussian-mixture generative models and labeled-dataset sampling.
//!
//! A model is a prior over categories plus one Gaussian likelihood per
//! category. Densities are available both directly and in log form; the log
//! form never underflows for finite inputs and is what the oracle uses.
//!
//! Component scale parameters are standard deviations. The published
//! configurations quote a "variance" for each cluster, but the experiment
//! grid writes each cluster as `N(mu, sigma)` with `sigma` swept over
//! `[1, 10]`, so the presets treat those numbers as standard deviations.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{format_float, log_sum_exp};
use crate::rng::{categorical, standard_normal_pair, RngKey};

/// `0.5 * ln(2*pi)`
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// `ln(2*pi)`
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian1D")]
pub struct Gaussian1D {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Deserialize)]
struct RawGaussian1D {
    mu: f64,
    sigma: f64,
}

impl TryFrom<RawGaussian1D> for Gaussian1D {
    type Error = Error;
    fn try_from(raw: RawGaussian1D) -> Result<Self> {
        Gaussian1D::new(raw.mu, raw.sigma)
    }
}

impl Gaussian1D {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::InvalidModel(format!("mean must be finite, got {mu}")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidModel(format!(
                "standard deviation must be finite and > 0, got {sigma}"
            )));
        }
        Ok(Self { mu, sigma })
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        -0.5 * z * z - self.sigma.ln() - LN_SQRT_2PI
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * std::f64::consts::TAU.sqrt())
    }
}

/// Bivariate normal with full covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian2D")]
pub struct Gaussian2D {
    pub mu: [f64; 2],
    pub cov: [[f64; 2]; 2],
    #[serde(skip)]
    precision: [[f64; 2]; 2],
    #[serde(skip)]
    ln_det: f64,
    #[serde(skip)]
    chol: [f64; 3],
}

#[derive(Deserialize)]
struct RawGaussian2D {
    mu: [f64; 2],
    cov: [[f64; 2]; 2],
}

impl TryFrom<RawGaussian2D> for Gaussian2D {
    type Error = Error;
    fn try_from(raw: RawGaussian2D) -> Result<Self> {
        Gaussian2D::new(raw.mu, raw.cov)
    }
}

impl Gaussian2D {
    pub fn new(mu: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        if mu.iter().chain(cov.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("2-D Gaussian parameters must be finite".into()));
        }
        let [[a, b], [c, d]] = cov;
        if (b - c).abs() > 1e-12 * (1.0 + b.abs().max(c.abs())) {
            return Err(Error::InvalidModel(format!("covariance is not symmetric ({b} vs {c})")));
        }
        let det = a * d - b * c;
        // both eigenvalues positive iff leading minor and determinant are
        if !(a > 0.0 && det > 0.0) {
            return Err(Error::InvalidModel(format!(
                "covariance is not positive definite (a = {a}, det = {det})"
            )));
        }
        let precision = [[d / det, -b / det], [-c / det, a / det]];
        let l11 = a.sqrt();
        let l21 = b / l11;
        let l22 = (d - l21 * l21).sqrt();
        Ok(Self {
            mu,
            cov,
            precision,
            ln_det: det.ln(),
            chol: [l11, l21, l22],
        })
    }

    /// Isotropic covariance `s^2 I`.
    pub fn isotropic(mu: [f64; 2], s: f64) -> Result<Self> {
        Self::new(mu, [[s * s, 0.0], [0.0, s * s]])
    }

    fn mahalanobis_sq(&self, v: [f64; 2]) -> f64 {
        let dx = v[0] - self.mu[0];
        let dy = v[1] - self.mu[1];
        let p = &self.precision;
        dx * (p[0][0] * dx + p[0][1] * dy) + dy * (p[1][0] * dx + p[1][1] * dy)
    }

    pub fn ln_pdf(&self, v: [f64; 2]) -> f64 {
        -LN_2PI - 0.5 * self.ln_det - 0.5 * self.mahalanobis_sq(v)
    }

    pub fn pdf(&self, v: [f64; 2]) -> f64 {
        (-0.5 * self.mahalanobis_sq(v)).exp() / (std::f64::consts::TAU * (0.5 * self.ln_det).exp())
    }

    /// Lower Cholesky factor `L` with `L Lᵀ = cov`, as `[[l11, 0], [l21, l22]]`.
    pub fn cholesky(&self) -> [[f64; 2]; 2] {
        let [l11, l21, l22] = self.chol;
        [[l11, 0.0], [l21, l22]]
    }
}

/// Shared behaviour of 1-D and 2-D mixtures.
pub trait Mixture {
    type Point: Copy;

    fn weights(&self) -> &[f64];

    fn num_components(&self) -> usize {
        self.weights().len()
    }

    /// Mixture density `f(x)` evaluated directly (may underflow to 0).
    fn density(&self, x: Self::Point) -> f64;

    /// `ln phi_k(x)` for component `k`.
    fn component_ln_pdf(&self, k: usize, x: Self::Point) -> f64;

    /// `ln(weight_k) + ln phi_k(x)` for every component; `-inf` for zero weights.
    fn weighted_ln_densities(&self, x: Self::Point) -> Vec<f64> {
        self.weights()
            .iter()
            .enumerate()
            .map(|(k, &w)| w.ln() + self.component_ln_pdf(k, x))
            .collect()
    }

    /// `ln f(x)`.
    fn ln_pdf(&self, x: Self::Point) -> f64 {
        log_sum_exp(&self.weighted_ln_densities(x))
    }

    /// Point coordinates, used for finiteness checks and serialization.
    fn coords(x: Self::Point) -> Vec<f64>;
}

fn validate_weights(weights: &[f64], n_components: usize) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidModel("a mixture needs at least one component".into()));
    }
    if weights.len() != n_components {
        return Err(Error::InvalidModel(format!(
            "{} weights for {} components",
            weights.len(),
            n_components
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && (0.0..=1.0).contains(*w))) {
        return Err(Error::InvalidModel(format!("weight {w} outside [0, 1]")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidModel(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture1D")]
pub struct Mixture1D {
    weights: Vec<f64>,
    components: Vec<Gaussian1D>,
}

#[derive(Deserialize)]
struct RawMixture1D {
    weights: Vec<f64>,
    components: Vec<Gaussian1D>,
}

impl TryFrom<RawMixture1D> for Mixture1D {
    type Error = Error;
    fn try_from(raw: RawMixture1D) -> Result<Self> {
        Mixture1D::new(raw.weights, raw.components)
    }
}

impl Mixture1D {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian1D>) -> Result<Self> {
        validate_weights(&weights, components.len())?;
        Ok(Self { weights, components })
    }

    /// Two clusters: weights `(p, 1 - p)`, components `N(mu1, sigma1)` and `N(mu2, sigma2)`.
    pub fn two_cluster(p: f64, mu1: f64, sigma1: f64, mu2: f64, sigma2: f64) -> Result<Self> {
        Self::new(
            vec![p, 1.0 - p],
            vec![Gaussian1D::new(mu1, sigma1)?, Gaussian1D::new(mu2, sigma2)?],
        )
    }

    pub fn components(&self) -> &[Gaussian1D] {
        &self.components
    }

    /// Mixture density `sum_k w_k phi_k(x)`.
    pub fn pdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * c.pdf(x))
            .sum()
    }

    /// Draw `n` labeled samples. Identical `(model, n, key)` give identical datasets.
    pub fn sample(&self, n: usize, key: impl Into<RngKey>) -> LabeledDataset {
        let mut rng = key.into().rng();
        let mut data = LabeledDataset::with_capacity(1, self.num_components(), n);
        for _ in 0..n {
            let y = categorical(&mut rng, &self.weights);
            let (z, _) = standard_normal_pair(&mut rng);
            let c = &self.components[y];
            data.push_unchecked(&[c.mu + c.sigma * z], y);
        }
        data
    }

    /// Quadrature support `[min mu - 10 max sigma, max mu + 10 max sigma]`.
    pub fn support(&self) -> (f64, f64) {
        let smax = self.components.iter().map(|c| c.sigma).fold(0.0, f64::max);
        let lo = self.components.iter().map(|c| c.mu).fold(f64::INFINITY, f64::min);
        let hi = self.components.iter().map(|c| c.mu).fold(f64::NEG_INFINITY, f64::max);
        (lo - 10.0 * smax, hi + 10.0 * smax)
    }
}

impl Mixture for Mixture1D {
    type Point = f64;

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn density(&self, x: f64) -> f64 {
        self.pdf(x)
    }

    fn component_ln_pdf(&self, k: usize, x: f64) -> f64 {
        self.components[k].ln_pdf(x)
    }

    fn coords(x: f64) -> Vec<f64> {
        vec![x]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture2D")]
pub struct Mixture2D {
    weights: Vec<f64>,
    components: Vec<Gaussian2D>,
}

#[derive(Deserialize)]
struct RawMixture2D {
    weights: Vec<f64>,
    components: Vec<Gaussian2D>,
}

impl TryFrom<RawMixture2D> for Mixture2D {
    type Error = Error;
    fn try_from(raw: RawMixture2D) -> Result<Self> {
        Mixture2D::new(raw.weights, raw.components)
    }
}

impl Mixture2D {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian2D>) -> Result<Self> {
        validate_weights(&weights, components.len())?;
        Ok(Self { weights, components })
    }

    pub fn components(&self) -> &[Gaussian2D] {
        &self.components
    }

    pub fn pdf(&self, v: [f64; 2]) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * c.pdf(v))
            .sum()
    }

    /// Draw `n` labeled plane samples; each draw is `mu + L z` with `L` the
    /// Cholesky factor of the component covariance.
    pub fn sample(&self, n: usize, key: impl Into<RngKey>) -> LabeledDataset {
        let mut rng = key.into().rng();
        let mut data = LabeledDataset::with_capacity(2, self.num_components(), n);
        for _ in 0..n {
            let y = categorical(&mut rng, &self.weights);
            data.push_unchecked(&self.draw_component(y, &mut rng), y);
        }
        data
    }

    pub(crate) fn draw_component<R: rand::Rng + ?Sized>(&self, k: usize, rng: &mut R) -> [f64; 2] {
        let (z1, z2) = standard_normal_pair(rng);
        let c = &self.components[k];
        let [[l11, _], [l21, l22]] = c.cholesky();
        [c.mu[0] + l11 * z1, c.mu[1] + l21 * z1 + l22 * z2]
    }
}

impl Mixture for Mixture2D {
    type Point = [f64; 2];

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn density(&self, v: [f64; 2]) -> f64 {
        self.pdf(v)
    }

    fn component_ln_pdf(&self, k: usize, v: [f64; 2]) -> f64 {
        self.components[k].ln_pdf(v)
    }

    fn coords(v: [f64; 2]) -> Vec<f64> {
        v.to_vec()
    }
}

/// Free-function form of [`Mixture1D::pdf`].
pub fn pdf_1d(model: &Mixture1D, x: f64) -> f64 {
    model.pdf(x)
}

/// Free-function form of [`Mixture2D::pdf`].
pub fn pdf_2d(model: &Mixture2D, v: [f64; 2]) -> f64 {
    model.pdf(v)
}

pub fn sample_labeled_1d(model: &Mixture1D, n: usize, key: impl Into<RngKey>) -> LabeledDataset {
    model.sample(n, key)
}

pub fn sample_labeled_2d(model: &Mixture2D, n: usize, key: impl Into<RngKey>) -> LabeledDataset {
    model.sample(n, key)
}

/// Either kind of mixture, as stored in configuration documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnyMixture {
    OneD(Mixture1D),
    TwoD(Mixture2D),
}

impl AnyMixture {
    pub fn num_components(&self) -> usize {
        match self {
            AnyMixture::OneD(m) => m.num_components(),
            AnyMixture::TwoD(m) => m.num_components(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            AnyMixture::OneD(_) => 1,
            AnyMixture::TwoD(_) => 2,
        }
    }
}

pub const PRESET_NAMES: [&str; 3] = ["large-error-1d", "small-error-1d", "ten-digit-2d"];

/// Named published configurations.
///
/// * `large-error-1d`: weights 0.6 / 0.4, clusters `N(-7, 1)` and `N(7, 8)`.
/// * `small-error-1d`: weights 0.5 / 0.5, clusters `N(-2, 5)` and `N(2, 5)`.
/// * `ten-digit-2d`: ten planar clusters with uniform priors 0.1. The
///   component parameters are synthetic (see [`ten_digit_2d`]).
///
/// All scale values are standard deviations.
pub fn preset(name: &str) -> Result<AnyMixture> {
    match name {
        "large-error-1d" => Ok(AnyMixture::OneD(large_error_1d())),
        "small-error-1d" => Ok(AnyMixture::OneD(small_error_1d())),
        "ten-digit-2d" => Ok(AnyMixture::TwoD(ten_digit_2d())),
        _ => Err(Error::UnknownPreset {
            name: name.to_string(),
            valid: PRESET_NAMES.join(", "),
        }),
    }
}

pub fn large_error_1d() -> Mixture1D {
    Mixture1D::two_cluster(0.6, -7.0, 1.0, 7.0, 8.0).expect("valid preset")
}

pub fn small_error_1d() -> Mixture1D {
    Mixture1D::two_cluster(0.5, -2.0, 5.0, 2.0, 5.0).expect("valid preset")
}

/// Ten 2-D clusters standing in for a digit-like latent plane.
///
/// Priors are all 0.1. Means are scattered over roughly `[-14, 16]^2` with
/// mildly anisotropic, correlated covariances (standard deviations 1.2 to
/// 2.0). Clusters 3, 5 and 8 sit close together; cluster 0 is isolated.
pub fn ten_digit_2d() -> Mixture2D {
    const PARAMS: [([f64; 2], [[f64; 2]; 2]); 10] = [
        ([-14.0, 6.0], [[3.0, 0.8], [0.8, 2.0]]),
        ([16.0, 2.0], [[1.5, -0.3], [-0.3, 4.0]]),
        ([2.0, 14.0], [[2.5, 0.4], [0.4, 2.5]]),
        ([6.0, -4.0], [[2.0, -0.6], [-0.6, 2.2]]),
        ([-4.0, -14.0], [[2.8, 0.5], [0.5, 1.8]]),
        ([2.0, -8.0], [[2.2, 0.3], [0.3, 2.6]]),
        ([-12.0, -4.0], [[2.0, 0.2], [0.2, 3.0]]),
        ([10.0, 10.0], [[1.8, -0.7], [-0.7, 2.4]]),
        ([9.0, -8.0], [[2.4, 0.6], [0.6, 2.0]]),
        ([4.0, 6.0], [[2.0, 0.5], [0.5, 2.0]]),
    ];
    let components = PARAMS
        .iter()
        .map(|&(mu, cov)| Gaussian2D::new(mu, cov).expect("valid preset"))
        .collect();
    Mixture2D::new(vec![0.1; 10], components).expect("valid preset")
}

/// Labeled samples stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    num_categories: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(dim: usize, num_categories: usize) -> Self {
        Self::with_capacity(dim, num_categories, 0)
    }

    pub fn with_capacity(dim: usize, num_categories: usize, n: usize) -> Self {
        Self {
            dim,
            num_categories,
            features: Vec::with_capacity(n * dim),
            labels: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, x: &[f64], y: usize) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: x.len() });
        }
        if y >= self.num_categories {
            return Err(Error::Schema(format!(
                "label {y} out of range for {} categories",
                self.num_categories
            )));
        }
        self.push_unchecked(x, y);
        Ok(())
    }

    fn push_unchecked(&mut self, x: &[f64], y: usize) {
        self.features.extend_from_slice(x);
        self.labels.push(y);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.features
            .chunks_exact(self.dim.max(1))
            .zip(self.labels.iter().copied())
    }

    /// Per-category label counts.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_categories];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// CSV with header `y,x0,...,x{d-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let mut header = vec!["y".to_string()];
        header.extend((0..self.dim).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(self.dim + 1);
        for (x, y) in self.iter() {
            row.clear();
            row.push(y.to_string());
            row.extend(x.iter().map(|v| format_float(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read the CSV produced by [`write_csv`](Self::write_csv). Errors name the
    /// offending row (1-based, header excluded) and column.
    pub fn read_csv<R: Read>(input: R, num_categories: usize) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = r.headers()?.clone();
        if header.get(0) != Some("y") {
            return Err(Error::Schema("first column must be `y`".into()));
        }
        let dim = header.len() - 1;
        for (j, name) in header.iter().skip(1).enumerate() {
            if name != format!("x{j}") {
                return Err(Error::Schema(format!("column {} must be `x{j}`, found `{name}`", j + 1)));
            }
        }
        let mut data = Self::new(dim, num_categories);
        let mut x = vec![0.0; dim];
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            let y: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::Schema(format!("row {row}, column y: `{}` is not a label", &rec[0])))?;
            if y >= num_categories {
                return Err(Error::Schema(format!(
                    "row {row}, column y: label {y} out of range for {num_categories} categories"
                )));
            }
            for j in 0..dim {
                let v: f64 = rec[j + 1].trim().parse().map_err(|_| {
                    Error::Schema(format!("row {row}, column x{j}: `{}` is not a number", &rec[j + 1]))
                })?;
                if !v.is_finite() {
                    return Err(Error::Schema(format!("row {row}, column x{j}: non-finite value")));
                }
                x[j] = v;
            }
            data.push_unchecked(&x, y);
        }
        Ok(data)
    }
}
