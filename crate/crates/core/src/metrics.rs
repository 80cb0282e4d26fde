//! Precision of a predicted posterior against the true one, and the
//! aggregations used for factor plots.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::format_float;
use crate::oracle::PosteriorVector;

/// Lower clamp applied to predicted probabilities inside KL.
pub const KL_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlOutcome {
    pub value: f64,
    /// Number of predicted entries raised to [`KL_EPSILON`].
    pub clamped: usize,
}

fn same_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() == q.len() {
        Ok(())
    } else {
        Err(Error::LengthMismatch { left: p.len(), right: q.len() })
    }
}

/// `sum_k p_k ln(p_k / max(q_k, eps))`, natural log; `p_k = 0` terms vanish.
pub fn kl_divergence_detailed(p: &PosteriorVector, q: &PosteriorVector) -> Result<KlOutcome> {
    let (p, q) = (p.probs(), q.probs());
    same_len(p, q)?;
    let mut value = 0.0;
    let mut clamped = 0;
    for (&pk, &qk) in p.iter().zip(q) {
        let qk = if qk < KL_EPSILON {
            clamped += 1;
            KL_EPSILON
        } else {
            qk
        };
        if pk > 0.0 {
            value += pk * (pk / qk).ln();
        }
    }
    Ok(KlOutcome { value, clamped })
}

pub fn kl_divergence(p: &PosteriorVector, q: &PosteriorVector) -> Result<f64> {
    kl_divergence_detailed(p, q).map(|o| o.value)
}

/// KL with the prefactor taken as the prior `p(y = k)` instead of the
/// posterior, `-sum_k prior_k ln(q_k / p_k)`, both probabilities clamped at
/// [`KL_EPSILON`]. Kept only for comparison with the literal printed form;
/// nothing else in the crate uses it.
pub fn kl_divergence_prior_weighted(
    prior: &[f64],
    p: &PosteriorVector,
    q: &PosteriorVector,
) -> Result<f64> {
    let (p, q) = (p.probs(), q.probs());
    same_len(p, q)?;
    same_len(prior, p)?;
    Ok(-prior
        .iter()
        .zip(p.iter().zip(q))
        .map(|(w, (pk, qk))| w * (qk.max(KL_EPSILON) / pk.max(KL_EPSILON)).ln())
        .sum::<f64>())
}

/// `|p_0 - q_0|` for two categories; total variation `½ sum |p_k - q_k|` otherwise.
///
/// For `K = 2` the two forms coincide, since `|p_1 - q_1| = |p_0 - q_0|`.
pub fn abs_difference(p: &PosteriorVector, q: &PosteriorVector) -> Result<f64> {
    let (p, q) = (p.probs(), q.probs());
    same_len(p, q)?;
    if p.len() == 2 {
        return Ok((p[0] - q[0]).abs());
    }
    Ok(total_variation(p, q))
}

pub(crate) fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPair {
    pub kl: f64,
    pub abs_diff: f64,
}

impl PrecisionPair {
    pub fn between(truth: &PosteriorVector, predicted: &PosteriorVector) -> Result<Self> {
        Ok(Self {
            kl: kl_divergence(truth, predicted)?,
            abs_diff: abs_difference(truth, predicted)?,
        })
    }
}

/// Equal-width bins over a factor axis with the mean of a metric per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSeries {
    pub edges: Vec<f64>,
    pub means: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

impl BinnedSeries {
    pub fn num_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// CSV `bin_lo,bin_hi,count,mean`; empty bins leave `mean` blank.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["bin_lo", "bin_hi", "count", "mean"])?;
        for i in 0..self.num_bins() {
            w.write_record([
                format_float(self.edges[i]),
                format_float(self.edges[i + 1]),
                self.counts[i].to_string(),
                self.means[i].map(format_float).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Average `value` within `num_bins` equal-width bins spanning `[min, max]` of `factor`.
///
/// The last bin is closed on the right. When every factor is equal, all
/// points land in the first bin.
pub fn bin_average(points: &[(f64, f64)], num_bins: usize) -> Result<BinnedSeries> {
    if points.is_empty() {
        return Err(Error::Empty("bin_average points"));
    }
    if num_bins == 0 {
        return Err(Error::InvalidSpec("num_bins must be >= 1".into()));
    }
    if points.iter().any(|(f, v)| !f.is_finite() || !v.is_finite()) {
        return Err(Error::NonFinite("bin_average point".into()));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / num_bins as f64;
    let edges: Vec<f64> = (0..=num_bins)
        .map(|i| if i == num_bins { hi } else { lo + width * i as f64 })
        .collect();

    let mut sums = vec![0.0; num_bins];
    let mut counts = vec![0usize; num_bins];
    for &(f, v) in points {
        let idx = if width > 0.0 {
            (((f - lo) / width).floor() as usize).min(num_bins - 1)
        } else {
            0
        };
        sums[idx] += v;
        counts[idx] += 1;
    }
    let means = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    Ok(BinnedSeries { edges, means, counts })
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub(crate) fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn rank_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    same_len(xs, ys)?;
    if xs.len() < 2 {
        return Err(Error::Degenerate("rank correlation needs at least 2 points".into()));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("NaN in rank correlation input".into()));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
        .ok_or_else(|| Error::Degenerate("rank correlation of a constant series".into()))
}
