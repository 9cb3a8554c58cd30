use approx::assert_relative_eq;
use porepinn::metrics::{error_metrics, kde_density, re_histogram, regression_metrics, relative_l2, sample_eval_points};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::statistics::Statistics;

fn dataset(seed: u64, n: usize, noise: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let err = Normal::new(0.0, noise).unwrap();
    let exact: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..10.0)).collect();
    let pred = exact.iter().map(|e| e + err.sample(&mut rng)).collect();
    (pred, exact)
}

#[test]
fn regression_matches_statrs_on_five_datasets() {
    for (seed, noise) in [(1, 0.01), (2, 0.1), (3, 0.5), (4, 1.0), (5, 3.0)] {
        let (p, e) = dataset(seed, 500, noise);
        let m = regression_metrics(&p, &e).unwrap();
        let r = p.iter().covariance(e.iter()) / (p.iter().std_dev() * e.iter().std_dev());
        assert_relative_eq!(m.r, r, max_relative = 1e-12);
        let ss_res: f64 = p.iter().zip(&e).map(|(a, b)| (a - b).powi(2)).sum();
        let ss_tot = e.iter().variance() * (e.len() - 1) as f64;
        assert_relative_eq!(m.r2, 1.0 - ss_res / ss_tot, max_relative = 1e-12);
    }
}

#[test]
fn known_small_examples() {
    let e = [1.0, 2.0, 3.0, 4.0];
    let m = error_metrics(&e, &e).unwrap();
    assert_eq!((m.relative_l2, m.max_relative, m.rmse, m.mape), (0.0, 0.0, 0.0, 0.0));
    let p = [1.1, 2.2, 3.3, 4.4];
    let m = error_metrics(&p, &e).unwrap();
    assert_relative_eq!(m.relative_l2, 0.1, max_relative = 1e-12);
    assert_relative_eq!(m.max_relative, 0.1, max_relative = 1e-12);
    assert_relative_eq!(m.mape, 0.1, max_relative = 1e-12);
    assert_relative_eq!(m.rmse, (0.30f64 / 4.0).sqrt(), max_relative = 1e-12);
    let r = regression_metrics(&p, &e).unwrap();
    assert_relative_eq!(r.r, 1.0, max_relative = 1e-12);
    assert!(error_metrics(&[1.0], &[0.0]).is_err());
    assert!(regression_metrics(&[1.0, 1.0, 1.0], &e[..3]).is_err());
}

#[test]
fn histogram_and_density_are_normalised() {
    let (p, e) = dataset(9, 2000, 0.05);
    let edges = [0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];
    let counts = re_histogram(&p, &e, &edges).unwrap();
    assert_eq!(counts.iter().sum::<usize>(), p.len());
    let pts: Vec<(f64, f64)> = e.iter().copied().zip(p.iter().copied()).collect();
    let kde = kde_density(&pts, 120).unwrap();
    assert_relative_eq!(kde.integral(), 1.0, epsilon = 2e-2);
}

#[test]
fn eval_sampling_is_seeded_and_distinct() {
    let a = sample_eval_points(100, 1000, 3).unwrap();
    assert_eq!(a, sample_eval_points(100, 1000, 3).unwrap());
    assert_ne!(a, sample_eval_points(100, 1000, 4).unwrap());
    let mut s = a.clone();
    s.sort_unstable();
    s.dedup();
    assert_eq!(s.len(), 100);
    assert!(s.iter().all(|&k| k < 1000));
    assert!(sample_eval_points(1001, 1000, 3).is_err());
}

proptest! {
    #[test]
    fn error_metrics_are_unit_scale_invariant(seed in 0u64..10_000, c in 1e-3f64..1e3, noise in 1e-4f64..2.0) {
        let (p, e) = dataset(seed, 64, noise);
        let ps: Vec<f64> = p.iter().map(|x| x * c).collect();
        let es: Vec<f64> = e.iter().map(|x| x * c).collect();
        let a = error_metrics(&p, &e).unwrap();
        let b = error_metrics(&ps, &es).unwrap();
        prop_assert!((a.relative_l2 - b.relative_l2).abs() <= 1e-12 * a.relative_l2.max(1e-300));
        prop_assert!((a.max_relative - b.max_relative).abs() <= 1e-12 * a.max_relative.max(1e-300));
        prop_assert!((a.mape - b.mape).abs() <= 1e-12 * a.mape.max(1e-300));
        prop_assert!((b.rmse - c * a.rmse).abs() <= 1e-12 * b.rmse.max(1e-300));
        prop_assert!((relative_l2(&p, &e).unwrap() - a.relative_l2).abs() <= 1e-15);
    }

    #[test]
    fn regression_bounds_hold(seed in 0u64..10_000, n in 3usize..200, noise in 1e-3f64..10.0) {
        let (p, e) = dataset(seed, n, noise);
        let m = regression_metrics(&p, &e).unwrap();
        prop_assert!(m.r.abs() <= 1.0);
        prop_assert!(m.r2 <= 1.0);
        prop_assert!(m.adj_r2 <= m.r2 + 1e-15);
    }
}
