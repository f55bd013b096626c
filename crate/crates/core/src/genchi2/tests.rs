use super::*;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn chi2_oracle(x: f64, dof: f64) -> f64 {
    ChiSquared::new(dof).unwrap().cdf(x)
}

fn positive_law(seed: u64) -> GenChi2 {
    use rand::Rng;
    let mut rng = crate::rng::substream(seed, 77);
    let n = rng.random_range(1..=3usize);
    let terms: Vec<(f64, u32, f64)> =
        (0..n).map(|_| (rng.random_range(0.2..3.0), rng.random_range(1..=3u32), rng.random_range(0.0..4.0))).collect();
    GenChi2::merged(terms, rng.random_range(-1.0..1.0)).unwrap()
}

fn ecdf_at(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|v| *v <= x) as f64 / sorted.len() as f64
}

#[test]
fn moments_closed_form() {
    assert_eq!(GenChi2::central(4).mean(), 4.0);
    assert_eq!(GenChi2::central(4).variance(), 8.0);
    let g = GenChi2::new(vec![2.0], vec![1], vec![3.0], -1.0).unwrap();
    assert_eq!(g.mean(), 7.0);
    let mu: f64 = 1.7;
    let g = GenChi2::new(vec![1.0], vec![1], vec![mu * mu], 0.0).unwrap();
    assert!((g.variance() - 2.0 * (1.0 + 2.0 * mu * mu)).abs() < 1e-12);
}

#[test]
fn moments_match_monte_carlo() {
    let g = GenChi2::new(vec![-0.8, 0.5, 2.0], vec![2, 1, 1], vec![1.0, 0.0, 2.5], 0.3).unwrap();
    let n = 1_000_000;
    let xs = g.sample(n, 4);
    let m = xs.iter().sum::<f64>() / n as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se_mean = (g.variance() / n as f64).sqrt();
    assert!((m - g.mean()).abs() < 4.0 * se_mean, "{m} vs {}", g.mean());
    // variance of the sample variance needs the fourth moment; 2% is > 4σ here
    assert!((v / g.variance() - 1.0).abs() < 0.02, "{v} vs {}", g.variance());
}

#[test]
fn validation_rejects_bad_parameters() {
    assert!(GenChi2::new(vec![], vec![], vec![], 0.0).is_err());
    assert!(GenChi2::new(vec![1.0, 1.0], vec![1, 1], vec![0.0, 0.0], 0.0).is_err());
    assert!(GenChi2::new(vec![0.0], vec![1], vec![0.0], 0.0).is_err());
    assert!(GenChi2::new(vec![1.0], vec![0], vec![0.0], 0.0).is_err());
    assert!(GenChi2::new(vec![1.0], vec![1], vec![-0.1], 0.0).is_err());
    assert!(GenChi2::new(vec![1.0], vec![1, 2], vec![0.0], 0.0).is_err());
}

#[test]
fn merged_combines_near_equal_coefficients() {
    let g = GenChi2::merged([(1.0, 1, 0.5), (1.0 + 1e-12, 2, 0.25), (3.0, 1, 0.0)], 0.0).unwrap();
    assert_eq!(g.w().len(), 2);
    assert_eq!(g.k(), &[3, 1]);
    assert!((g.lambda()[0] - 0.75).abs() < 1e-15);
}

#[test]
fn imhof_chi2_one_dof_95_percent_point() {
    let g = GenChi2::central(1);
    let oracle = chi2_oracle(3.841459, 1.0);
    assert!((oracle - 0.95).abs() < 1e-6);
    let v = g.cdf_imhof(3.841459, 1e-7).unwrap();
    assert!((v - 0.95).abs() < 1e-6);
    assert!((v - oracle).abs() < 1e-7);
}

#[test]
fn imhof_translation_identity() {
    let g = GenChi2::new(vec![-1.0, 0.7], vec![1, 3], vec![0.4, 1.2], 2.5).unwrap();
    let g0 = g.with_offset(0.0);
    for &x in &[-4.0, 0.0, 2.5, 6.0, 11.0] {
        let a = g.cdf_imhof(x, 1e-9).unwrap();
        let b = g0.cdf_imhof(x - 2.5, 1e-9).unwrap();
        assert!((a - b).abs() < 2e-9, "x={x}: {a} vs {b}");
    }
}

#[test]
fn imhof_mixed_sign_matches_monte_carlo() {
    let g = GenChi2::new(vec![-1.5, 0.6, 2.0], vec![1, 2, 1], vec![0.5, 1.0, 0.3], 0.2).unwrap();
    let mut xs = g.sample(1_000_000, 21);
    xs.sort_by(f64::total_cmp);
    for &x in &[-6.0, -3.0, -1.0, 0.0, 1.5, 4.0, 9.0] {
        let f = g.cdf_imhof(x, 1e-6).unwrap();
        assert!((f - ecdf_at(&xs, x)).abs() < 0.005, "x={x}");
    }
}

#[test]
fn ruben_central_chi2_three_dof() {
    let g = GenChi2::central(3);
    let r = g.cdf_ruben(11.344867, DEFAULT_RUBEN_TERMS).unwrap();
    assert!((r.value - 0.99).abs() < 1e-7);
    assert!((r.value - chi2_oracle(11.344867, 3.0)).abs() < 1e-12);
}

#[test]
fn ruben_below_support_is_zero() {
    let g = positive_law(3).with_offset(1.0);
    assert_eq!(g.cdf_ruben(0.5, 200).unwrap().value, 0.0);
    assert_eq!(g.cdf_imhof(0.5, 1e-6).unwrap(), 0.0);
}

#[test]
fn ruben_rejects_mixed_sign_and_short_series() {
    let g = GenChi2::new(vec![-1.0, 1.0], vec![1, 1], vec![0.0, 0.0], 0.0).unwrap();
    assert!(matches!(g.cdf_ruben(1.0, 200), Err(Error::MethodInapplicable(_))));
    assert!(GenChi2::central(2).cdf_ruben(1.0, 10).is_err());
}

#[test]
fn ruben_agrees_with_imhof() {
    for seed in 0..50 {
        let g = positive_law(seed);
        let (m, sd) = (g.mean(), g.variance().sqrt());
        for i in 0..10 {
            let x = g.t() + (m - g.t() + 3.0 * sd) * (i as f64 + 0.5) / 10.0;
            let r = g.cdf_ruben(x, DEFAULT_RUBEN_TERMS).unwrap();
            let v = g.cdf_imhof(x, 1e-10).unwrap();
            assert!(r.error_bound < 1e-9);
            assert!((r.value - v).abs() < 1e-8, "seed {seed} x {x}: {} vs {v}", r.value);
        }
    }
}

#[test]
fn imhof_tolerance_is_validated() {
    let g = GenChi2::central(2);
    assert!(g.cdf_imhof(1.0, 0.0).is_err());
    assert!(g.cdf_imhof(1.0, 1e-2).is_err());
}

#[test]
fn mixture_cdf_degenerate_cases() {
    let g = positive_law(9);
    let single = GenChi2Mixture::single(g.clone());
    let twin = GenChi2Mixture::new(vec![0.5, 0.5], vec![g.clone(), g.clone()]).unwrap();
    for &x in &[0.5, 2.0, 6.0] {
        let c = g.cdf_ruben(x, 400).unwrap().value;
        assert!((single.cdf(x, 1e-9).unwrap() - c).abs() < 1e-9);
        assert!((twin.cdf(x, 1e-9).unwrap() - c).abs() < 1e-9);
    }
}

#[test]
fn mixture_cdf_routes_agree() {
    let m = GenChi2Mixture::new(vec![0.2, 0.5, 0.3], vec![positive_law(1), positive_law(2), positive_law(5)]).unwrap();
    for &x in &[0.3, 1.0, 4.0, 10.0] {
        let a = m.cdf(x, 1e-9).unwrap();
        let b = m.cdf_inversion(x, 1e-9).unwrap();
        assert!((a - b).abs() < 2e-9, "x={x}: {a} vs {b}");
    }
}

#[test]
fn mixture_mean_and_json() {
    let m = GenChi2Mixture::new(vec![0.25, 0.75], vec![GenChi2::central(2), GenChi2::central(4)]).unwrap();
    assert!((m.mean() - 3.5).abs() < 1e-15);
    let s = serde_json::to_string(&m).unwrap();
    assert!(s.contains("\"lambda\""));
    let back: GenChi2Mixture = serde_json::from_str(&s).unwrap();
    assert_eq!(back, m);
    let bad = r#"{"weights":[0.5,0.4],"components":[{"w":[1.0],"k":[1],"lambda":[0.0],"t":0.0},{"w":[1.0],"k":[1],"lambda":[0.0],"t":0.0}]}"#;
    assert!(serde_json::from_str::<GenChi2Mixture>(bad).is_err());
}

#[test]
fn mixture_mean_matches_monte_carlo() {
    let m = GenChi2Mixture::new(vec![0.3, 0.7], vec![positive_law(11), positive_law(12)]).unwrap();
    let n = 1_000_000;
    let xs = m.sample(n, 3);
    let mean = xs.iter().sum::<f64>() / n as f64;
    assert!((mean - m.mean()).abs() < 4.0 * (m.variance() / n as f64).sqrt());
}

#[test]
fn quantile_chi2_one_dof() {
    let m = GenChi2Mixture::single(GenChi2::central(1));
    let q = m.quantile(0.95, QUANTILE_TOL).unwrap();
    assert!((q - 3.841459).abs() < 1e-4);
}

#[test]
fn quantile_round_trip_and_monotone() {
    let m = GenChi2Mixture::new(vec![0.4, 0.6], vec![positive_law(20), positive_law(21)]).unwrap();
    let mut prev = f64::NEG_INFINITY;
    for &p in &[0.01, 0.05, 0.5, 0.95, 0.99] {
        let q = m.quantile(p, QUANTILE_TOL).unwrap();
        assert!((m.cdf(q, 1e-10).unwrap() - p).abs() <= 1e-6);
        assert!(q >= prev);
        prev = q;
    }
    assert!(m.quantile(0.0, 1e-6).is_err());
    assert!(m.quantile(1.0, 1e-6).is_err());
}

#[test]
fn quantile_mixed_sign_support() {
    let m = GenChi2Mixture::single(GenChi2::new(vec![-2.0, 1.0], vec![1, 2], vec![0.5, 0.0], 0.0).unwrap());
    let q = m.quantile(0.1, 1e-6).unwrap();
    assert!(q < 0.0);
    assert!((m.cdf(q, 1e-9).unwrap() - 0.1).abs() < 1e-6);
}

#[test]
fn sampling_contracts() {
    let g = GenChi2::central(2);
    let n = 1_000_000;
    let xs = g.sample(n, 8);
    let mean = xs.iter().sum::<f64>() / n as f64;
    assert!((mean - 2.0).abs() < 4.0 * (4.0 / n as f64).sqrt());
    let shifted = g.with_offset(3.25).sample(1000, 8);
    for (a, b) in xs.iter().zip(&shifted) {
        assert!((b - a - 3.25).abs() < 1e-12);
    }
    assert_eq!(g.sample(100, 1), g.sample(100, 1));
}

#[test]
fn sampling_ks_against_cdf() {
    let m = GenChi2Mixture::new(vec![0.35, 0.65], vec![positive_law(30), positive_law(31)]).unwrap();
    let n = 100_000;
    let mut xs = m.sample(n, 17);
    xs.sort_by(f64::total_cmp);
    let eval = m.evaluator(1e-8).unwrap();
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = eval.cdf(*x).unwrap();
        d = d.max((f - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - f).abs());
    }
    assert!(d < 1.63 / (n as f64).sqrt(), "ks {d}");
}

#[test]
fn central_case_matches_incomplete_gamma() {
    for dof in 1..=6u32 {
        let m = GenChi2Mixture::single(GenChi2::central(dof));
        for i in 1..=20 {
            let x = 0.75 * i as f64;
            let v = m.cdf(x, 1e-10).unwrap();
            assert!((v - chi2_oracle(x, dof as f64)).abs() < 1e-8);
        }
    }
}

#[test]
fn independent_sum_of_chi2_is_chi2() {
    let law = IndependentSum::new(vec![
        GenChi2Mixture::single(GenChi2::central(1)),
        GenChi2Mixture::single(GenChi2::central(2)),
    ])
    .unwrap();
    for &x in &[0.5, 2.0, 5.0, 12.0] {
        assert!((law.cdf(x, 1e-9).unwrap() - chi2_oracle(x, 3.0)).abs() < 1e-8);
    }
    let q = law.quantile(0.99, 1e-6).unwrap();
    assert!((q - 11.344867).abs() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mixture_cdf_is_monotone(seed in 0u64..1000, a in 0.0f64..20.0, b in 0.0f64..20.0) {
        let m = GenChi2Mixture::new(vec![0.5, 0.5], vec![positive_law(seed), positive_law(seed + 1)]).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let eval = m.evaluator(1e-9).unwrap();
        prop_assert!(eval.cdf(lo).unwrap() <= eval.cdf(hi).unwrap() + 2e-9);
    }

    #[test]
    fn cdf_limits(seed in 0u64..1000) {
        let g = positive_law(seed);
        let m = GenChi2Mixture::single(g.clone());
        prop_assert_eq!(m.cdf(g.t() - 1.0, 1e-8).unwrap(), 0.0);
        let far = g.mean() + 60.0 * g.variance().sqrt() + 10.0;
        prop_assert!((m.cdf(far, 1e-8).unwrap() - 1.0).abs() < 1e-8);
    }
}
