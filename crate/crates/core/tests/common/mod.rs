//! Shared helpers for the integration tests: seeded random models and an
//! extended-precision reference for mixture posteriors.

#![allow(dead_code)]

use dashu_float::FBig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twopath::generator::{Gaussian1D, Gaussian2D, Mixture, Mixture1D, Mixture2D};

/// Working precision of the reference computations, in bits.
pub const PREC: usize = 256;

pub fn big(v: f64) -> FBig {
    FBig::try_from(v).expect("finite").with_precision(PREC).value()
}

pub fn to_f64(v: &FBig) -> f64 {
    v.to_f64().value()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strictly positive weights summing to one (up to rounding, then renormalised in f64).
pub fn random_weights(r: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
    let tail: f64 = w[..k - 1].iter().sum();
    w[k - 1] = 1.0 - tail;
    w
}

pub fn random_mixture_1d(r: &mut ChaCha8Rng) -> Mixture1D {
    let k = r.random_range(2..=6);
    let comps = (0..k)
        .map(|_| Gaussian1D::new(r.random_range(-12.0..12.0), r.random_range(0.3..10.0)).unwrap())
        .collect();
    Mixture1D::new(random_weights(r, k), comps).unwrap()
}

pub fn random_gaussian_2d(r: &mut ChaCha8Rng) -> Gaussian2D {
    let a: f64 = r.random_range(0.3..6.0);
    let c: f64 = r.random_range(0.3..6.0);
    let rho: f64 = r.random_range(-0.9..0.9);
    let b = rho * (a * c).sqrt();
    Gaussian2D::new([r.random_range(-15.0..15.0), r.random_range(-15.0..15.0)], [[a, b], [b, c]]).unwrap()
}

pub fn random_mixture_2d(r: &mut ChaCha8Rng) -> Mixture2D {
    let k = r.random_range(2..=6);
    let comps = (0..k).map(|_| random_gaussian_2d(r)).collect();
    Mixture2D::new(random_weights(r, k), comps).unwrap()
}

/// `w_k phi_k(x)` without the shared `1/sqrt(2 pi)` factor.
pub fn joint_1d_big(m: &Mixture1D, x: f64) -> Vec<FBig> {
    let x = big(x);
    m.weights()
        .iter()
        .zip(m.components())
        .map(|(&w, c)| {
            let z = (&x - big(c.mu)) / big(c.sigma);
            let half = big(0.5);
            big(w) * (-(half * &z * &z)).exp() / big(c.sigma)
        })
        .collect()
}

/// `w_k phi_k(v)` without the shared `1/(2 pi)` factor, via the explicit 2x2 inverse.
pub fn joint_2d_big(m: &Mixture2D, v: [f64; 2]) -> Vec<FBig> {
    m.weights()
        .iter()
        .zip(m.components())
        .map(|(&w, c)| {
            let [[a, b], [_, d]] = c.cov;
            let (a, b, d) = (big(a), big(b), big(d));
            let det = &a * &d - &b * &b;
            let dx = big(v[0]) - big(c.mu[0]);
            let dy = big(v[1]) - big(c.mu[1]);
            let quad = (&d * &dx * &dx - big(2.0) * &b * &dx * &dy + &a * &dy * &dy) / &det;
            // 1/sqrt(det) folded into the exponent
            big(w) * (-(big(0.5) * (quad + det.ln()))).exp()
        })
        .collect()
}

pub fn normalise(joint: &[FBig]) -> Vec<f64> {
    let total = joint.iter().fold(big(0.0), |acc, v| acc + v);
    joint.iter().map(|v| to_f64(&(v / &total))).collect()
}
