//! Oracle quantities against an independent 256-bit evaluation of Bayes' rule.

mod common;

use common::*;
use rand::Rng;
use twopath::generator::{ten_digit_2d, Mixture, Mixture1D};
use twopath::oracle::{posterior_1d, posterior_2d, sparsity_hg, sparsity_two_cluster};

#[test]
fn posterior_1d_matches_extended_precision() {
    let mut r = rng(11);
    for _ in 0..60 {
        let m = random_mixture_1d(&mut r);
        for _ in 0..20 {
            let x = r.random_range(-35.0..35.0);
            let got = posterior_1d(&m, x).unwrap();
            let want = normalise(&joint_1d_big(&m, x));
            for (g, w) in got.probs().iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12, "x={x}: {g} vs {w}");
            }
        }
    }
}

#[test]
fn posterior_1d_deep_in_the_tails() {
    // far enough out that every joint term underflows in f64
    let m = Mixture1D::two_cluster(0.3, -2.0, 0.5, 3.0, 0.7).unwrap();
    for x in [-60.0, -45.0, 40.0, 80.0] {
        assert!(m.weighted_ln_densities(x).iter().all(|l| l.exp() == 0.0));
        let got = posterior_1d(&m, x).unwrap();
        let want = normalise(&joint_1d_big(&m, x));
        for (g, w) in got.probs().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12, "x={x}: {g} vs {w}");
        }
    }
}

#[test]
fn posterior_2d_matches_extended_precision() {
    let mut r = rng(12);
    let mut models: Vec<_> = (0..30).map(|_| random_mixture_2d(&mut r)).collect();
    models.push(ten_digit_2d());
    for m in &models {
        for _ in 0..15 {
            let v = [r.random_range(-30.0..30.0), r.random_range(-30.0..30.0)];
            let got = posterior_2d(m, v).unwrap();
            let want = normalise(&joint_2d_big(m, v));
            for (g, w) in got.probs().iter().zip(&want) {
                assert!((g - w).abs() <= 1e-11, "v={v:?}: {g} vs {w}");
            }
        }
    }
}

#[test]
fn two_cluster_sparsity_matches_ratio_form() {
    let mut r = rng(13);
    for _ in 0..300 {
        let m = Mixture1D::two_cluster(
            r.random_range(0.05..0.95),
            r.random_range(-9.0..9.0),
            r.random_range(0.5..10.0),
            r.random_range(-9.0..9.0),
            r.random_range(0.5..10.0),
        )
        .unwrap();
        let x = r.random_range(-35.0..35.0);
        let j = joint_1d_big(&m, x);
        let num = if j[0] > j[1] { &j[0] - &j[1] } else { &j[1] - &j[0] };
        let den = &j[0] + &j[1];
        let want = to_f64(&(num / den));
        let got = sparsity_two_cluster(&m, x).unwrap();
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
}

#[test]
fn hg_sparsity_matches_extended_precision() {
    let m = ten_digit_2d();
    let mut r = rng(14);
    for _ in 0..100 {
        let v = [r.random_range(-25.0..25.0), r.random_range(-25.0..25.0)];
        // -sum ln(w_k phi_k), restoring the 1/(2 pi) factor per component
        let two_pi = big(2.0 * std::f64::consts::PI);
        let want: f64 = joint_2d_big(&m, v)
            .iter()
            .map(|j| -to_f64(&(j / &two_pi).ln()))
            .sum();
        let got = sparsity_hg(&m, v).unwrap();
        assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
    }
    assert_eq!(m.num_components(), 10);
}
