mod common;

use common::brute_curve;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatue::metrics::{pearson_slices, sparsification};
use splatue::scene::ImageBuffer;

fn image(v: Vec<f64>) -> ImageBuffer {
    let n = v.len();
    ImageBuffer::from_vec(n, 1, 1, v).unwrap()
}

#[test]
fn curves_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let err: Vec<f64> = (0..1000).map(|_| rng.random::<f64>().powi(2)).collect();
    let unc: Vec<f64> = err.iter().map(|e| e + 0.3 * rng.random::<f64>()).collect();
    let r = sparsification(&image(err.clone()), &image(unc.clone()), None, 100).unwrap();
    let oracle = brute_curve(&err, &err, 100);
    let by_unc = brute_curve(&err, &unc, 100);
    for k in 0..100 {
        assert!((r.oracle_curve[k] - oracle[k]).abs() <= 1e-12 * oracle[0]);
        assert!((r.uncertainty_curve[k] - by_unc[k]).abs() <= 1e-12 * by_unc[0]);
    }
    let diff: Vec<f64> = by_unc.iter().zip(&oracle).map(|(a, b)| a - b).collect();
    let mut area = 0.0;
    for k in 0..99 {
        area += 0.005 * (diff[k] + diff[k + 1]);
    }
    assert!((r.ause - area).abs() <= 1e-3);
    assert!((r.ause - area).abs() <= 1e-15);
    assert!(r.ause > 0.0);
    assert!(r.oracle_curve.windows(2).all(|w| w[1] <= w[0] + 1e-15));
}

#[test]
fn perfect_ranking_has_zero_area() {
    let err: Vec<f64> = (0..500).map(|i| ((i * 37) % 101) as f64).collect();
    let unc: Vec<f64> = err.iter().map(|e| 3.0 * e + 1.0).collect();
    let r = sparsification(&image(err), &image(unc), None, 100).unwrap();
    assert!(r.ause.abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ause_invariant_to_monotone_uncertainty_transform(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let err: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let unc: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let warped: Vec<f64> = unc.iter().map(|u| (5.0 * u).exp() + 2.0).collect();
        let a = sparsification(&image(err.clone()), &image(unc), None, 100).unwrap();
        let b = sparsification(&image(err), &image(warped), None, 100).unwrap();
        prop_assert_eq!(a.ause, b.ause);
    }

    #[test]
    fn ause_invariant_to_error_rescale(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let err: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let unc: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let scaled: Vec<f64> = err.iter().map(|e| c * e).collect();
        let a = sparsification(&image(err), &image(unc.clone()), None, 100).unwrap();
        let b = sparsification(&image(scaled), &image(unc), None, 100).unwrap();
        prop_assert!((a.ause - b.ause).abs() <= 1e-12);
    }

    #[test]
    fn pearson_affine_invariance(seed in 0u64..10_000, a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x + rng.random::<f64>()).collect();
        let r = pearson_slices(&xs, &ys).unwrap();
        let mapped: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        prop_assert!((pearson_slices(&mapped, &ys).unwrap() - r).abs() <= 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
        prop_assert!((pearson_slices(&neg, &ys).unwrap() + r).abs() <= 1e-12);
        prop_assert!((pearson_slices(&ys, &xs).unwrap() - r).abs() <= 1e-12);
    }
}
