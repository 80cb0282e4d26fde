//! Spearman correlation against a quadratic brute-force reference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twopath::metrics::rank_correlation;

/// Average ranks by counting: rank = #smaller + (#equal + 1) / 2.
fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let less = v.iter().filter(|b| *b < a).count() as f64;
            let equal = v.iter().filter(|b| *b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn brute_spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (brute_ranks(x), brute_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn agrees_with_brute_force_including_ties() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let n = r.random_range(2..80);
        // coarse values force ties
        let x: Vec<f64> = (0..n).map(|_| (r.random_range(0..12)) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 0.3 + r.random_range(0..6) as f64).collect();
        let want = brute_spearman(&x, &y);
        match rank_correlation(&x, &y) {
            Ok(got) => assert!((got - want).abs() < 1e-12, "{got} vs {want}"),
            Err(_) => assert!(want.is_nan(), "unexpected error with finite reference {want}"),
        }
    }
}

#[test]
fn no_tie_closed_form() {
    // 1 - 6 sum d^2 / (n (n^2 - 1))
    let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0];
    let want = 1.0 - 6.0 * 6.0 / (6.0 * 35.0);
    assert!((rank_correlation(&x, &y).unwrap() - want).abs() < 1e-15);
}

#[test]
fn monotone_transforms_do_not_matter() {
    let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin()).collect();
    let y: Vec<f64> = x.iter().map(|v| (3.0 * v).exp()).collect();
    assert!((rank_correlation(&x, &y).unwrap() - 1.0).abs() < 1e-15);
    let z: Vec<f64> = x.iter().map(|v| -v.powi(3)).collect();
    assert!((rank_correlation(&x, &z).unwrap() + 1.0).abs() < 1e-15);
}
