//! Acceptance criteria, one PASS/FAIL line each. Tolerances are pinned
//! below; the process exits nonzero if any criterion fails.

use std::process::Command;
use std::time::Instant;

use gmnds_core::gmfilter::{run_filter, simulate_truth, ConsistencyConfig, LinearGmModel, TestMode, TestSchedule};
use gmnds_core::harness::{calibrate_filter, validate_static, validate_sum};
use gmnds_core::nds::{gaussian_nds_dist, gm_nds_dist, nds_statistic, sum_nds_dist, sum_nds_law};
use gmnds_core::synth::{bimodal_1d, random_gm};
use gmnds_core::{GaussianMixture, GenChi2Mixture};
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const CHI2_REDUCTION_TOL: f64 = 1e-8;
const MEAN_IDENTITY_TOL: f64 = 1e-9;
const OFFSET_TOL: f64 = 1e-8;
const KS_SAMPLES: usize = 100_000;
/// Kolmogorov 99% point over √N.
const KS_BOUND: f64 = 0.00515;
const NAIVE_KS_MIN: f64 = 0.1;
const COVERAGE_RANGE: (f64, f64) = (0.037, 0.063);
const RUBEN_IMHOF_TOL: f64 = 1e-8;
const QUANTILE_ROUND_TRIP_TOL: f64 = 1e-6;
const BLOCK_DIAG_TOL: f64 = 1e-8;
const LEVEL_MAX: f64 = 0.096;
const POWER_MIN: f64 = 0.5;
const KALMAN_TOL: f64 = 1e-10;

/// CDF evaluation tolerance, well below every criterion tolerance.
const CDF_TOL: f64 = 1e-11;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn suite_gms() -> Vec<GaussianMixture> {
    (0..100u64).map(|s| random_gm(1000 + s, [1, 2, 4][(s % 3) as usize], 1 + (s % 5) as usize)).collect()
}

fn chi2_reduction() -> Outcome {
    let mut worst = 0.0f64;
    for n in 1..=6usize {
        let z = DVector::zeros(n);
        let eye = DMatrix::identity(n, n);
        let law = GenChi2Mixture::single(gaussian_nds_dist(&z, &eye, &z, &eye).unwrap());
        let oracle = ChiSquared::new(n as f64).unwrap();
        let hi = n as f64 + 6.0 * (2.0 * n as f64).sqrt();
        for i in 1..=20 {
            let x = hi * i as f64 / 20.0;
            worst = worst.max((law.cdf(x, CDF_TOL).unwrap() - oracle.cdf(x)).abs());
        }
    }
    check(worst < CHI2_REDUCTION_TOL, format!("max |Δ| = {worst:.2e} (tol {CHI2_REDUCTION_TOL:.0e})"))
}

fn mean_identity() -> Outcome {
    let gms = suite_gms();
    let mut worst = 0.0f64;
    for gm in &gms {
        worst = worst.max((gm_nds_dist(gm).unwrap().mean() - gm.dim() as f64).abs());
    }
    let mut worst_sum = 0.0f64;
    for s in 0..10 {
        let parts: Vec<GaussianMixture> = gms[3 * s..3 * s + 3].to_vec();
        let total: f64 = parts.iter().map(|g| g.dim() as f64).sum();
        worst_sum = worst_sum.max((sum_nds_dist(&parts, None).unwrap().mixture.mean() - total).abs());
        worst_sum = worst_sum.max((sum_nds_law(&parts).unwrap().mean() - total).abs());
    }
    check(
        worst < MEAN_IDENTITY_TOL && worst_sum < MEAN_IDENTITY_TOL,
        format!("max |mean − n| = {worst:.2e}, sums {worst_sum:.2e} (tol {MEAN_IDENTITY_TOL:.0e})"),
    )
}

fn offset_invariant() -> Outcome {
    let mut worst = 0.0f64;
    let mut dof_ok = true;
    for gm in suite_gms() {
        let (mean, cov) = gm.moments().unwrap();
        let law = gm_nds_dist(&gm).unwrap();
        for (c, g) in gm.components().iter().zip(law.components()) {
            let q = nds_statistic(c.mean(), &mean, &cov).unwrap();
            worst = worst.max(g.t().abs() / (1.0 + q));
            dof_ok &= g.k().iter().sum::<u32>() as usize == gm.dim();
        }
    }
    check(
        worst <= OFFSET_TOL && dof_ok,
        format!("max |t|/(1+q(μ_g)) = {worst:.2e} (tol {OFFSET_TOL:.0e}), Σk = n: {dof_ok}"),
    )
}

fn monte_carlo_agreement() -> Outcome {
    let mut worst = 0.0f64;
    for s in 0..10u64 {
        let gm = random_gm(2000 + s, 1 + (s % 3) as usize, 2 + (s % 3) as usize);
        worst = worst.max(validate_static(&gm, KS_SAMPLES, 3000 + s).unwrap().exact.ks_distance);
    }
    let naive = validate_static(&bimodal_1d(), KS_SAMPLES, 7).unwrap().naive.ks_distance;
    check(
        worst < KS_BOUND && naive > NAIVE_KS_MIN,
        format!("max exact KS = {worst:.5} (< {KS_BOUND}), bimodal naive KS = {naive:.3} (> {NAIVE_KS_MIN})"),
    )
}

fn coverage() -> Outcome {
    let gms: Vec<GaussianMixture> = (0..3).map(|c| random_gm(80 + c, 2, 3)).collect();
    let r = validate_sum(&gms, 1000, 0.05, None, 900).unwrap();
    check(
        r.rate >= COVERAGE_RANGE.0 && r.rate <= COVERAGE_RANGE.1,
        format!(
            "exceedance {}/1000 = {:.3} in [{}, {}], τ = {:.4}",
            r.exceedances, r.rate, COVERAGE_RANGE.0, COVERAGE_RANGE.1, r.tau
        ),
    )
}

fn ruben_vs_imhof() -> Outcome {
    let mut worst = 0.0f64;
    let mut sets = 0;
    for s in 0..50u64 {
        let gm = random_gm(4000 + s, 1 + (s % 4) as usize, 1);
        let law = gm_nds_dist(&gm).unwrap();
        let g = &law.components()[0];
        assert!(g.is_positive());
        let hi = g.mean() + 3.0 * g.variance().sqrt();
        for i in 0..10 {
            let x = g.support_min() + (hi - g.support_min()) * (i as f64 + 0.5) / 10.0;
            let r = g.cdf_ruben(x, gmnds_core::genchi2::DEFAULT_RUBEN_TERMS).unwrap().value;
            let v = g.cdf_imhof(x, 1e-10).unwrap();
            worst = worst.max((r - v).abs());
        }
        sets += 1;
    }
    check(worst < RUBEN_IMHOF_TOL, format!("{sets}×10 points, max |Δ| = {worst:.2e} (tol {RUBEN_IMHOF_TOL:.0e})"))
}

fn quantile_contract() -> Outcome {
    let mut laws: Vec<GenChi2Mixture> = suite_gms().iter().step_by(10).map(|g| gm_nds_dist(g).unwrap()).collect();
    laws.push(gm_nds_dist(&bimodal_1d()).unwrap());
    let parts: Vec<GaussianMixture> = (0..3).map(|c| random_gm(80 + c, 2, 3)).collect();
    laws.push(sum_nds_dist(&parts, None).unwrap().mixture);
    let mut worst = 0.0f64;
    for law in &laws {
        for &p in &[0.01, 0.05, 0.5, 0.95, 0.99] {
            let q = law.quantile(p, gmnds_core::genchi2::QUANTILE_TOL).unwrap();
            worst = worst.max((law.cdf(q, CDF_TOL).unwrap() - p).abs());
        }
    }
    check(
        worst <= QUANTILE_ROUND_TRIP_TOL,
        format!("{} laws × 5 levels, max |F(q(p)) − p| = {worst:.2e} (tol {QUANTILE_ROUND_TRIP_TOL:.0e})", laws.len()),
    )
}

fn block_diagonal(a: &GaussianMixture, b: &GaussianMixture) -> GaussianMixture {
    let (na, nb) = (a.dim(), b.dim());
    let mut parts = Vec::new();
    for ca in a.components() {
        for cb in b.components() {
            let mean = DVector::from_iterator(na + nb, ca.mean().iter().chain(cb.mean().iter()).copied());
            let mut cov = DMatrix::zeros(na + nb, na + nb);
            cov.view_mut((0, 0), (na, na)).copy_from(ca.cov());
            cov.view_mut((na, na), (nb, nb)).copy_from(cb.cov());
            parts.push((ca.weight() * cb.weight(), mean, cov));
        }
    }
    GaussianMixture::from_parts(parts).unwrap()
}

fn construction_equivalence() -> Outcome {
    let (a, b) = (random_gm(5000, 2, 2), random_gm(5001, 1, 3));
    let concat = sum_nds_dist(&[a.clone(), b.clone()], None).unwrap().mixture;
    let literal = gm_nds_dist(&block_diagonal(&a, &b)).unwrap();
    let hi = concat.mean() + 4.0 * concat.variance().sqrt();
    let mut worst = 0.0f64;
    for i in 1..=20 {
        let x = hi * i as f64 / 20.0;
        worst = worst.max((concat.cdf(x, CDF_TOL).unwrap() - literal.cdf(x, CDF_TOL).unwrap()).abs());
    }
    check(worst < BLOCK_DIAG_TOL, format!("20 points, max |Δ| = {worst:.2e} (tol {BLOCK_DIAG_TOL:.0e})"))
}

fn filter_level_and_power() -> Outcome {
    let truth = LinearGmModel::localization();
    let config = ConsistencyConfig {
        steps: 75,
        alpha: 0.05,
        schedule: TestSchedule::Fixed { start: 5, spacing: 5, count: 15 },
        top_g: None,
        mode: TestMode::State,
    };
    let level = calibrate_filter(&truth, &truth, &config, 200, 2024).unwrap();
    let power = calibrate_filter(&truth, &LinearGmModel::localization_mismatched(), &config, 200, 2025).unwrap();
    check(
        level.rate <= LEVEL_MAX && power.rate >= POWER_MIN,
        format!(
            "matched {}/200 = {:.3} (≤ {LEVEL_MAX}), mismatched {}/200 = {:.3} (≥ {POWER_MIN})",
            level.rejections, level.rate, power.rejections, power.rate
        ),
    )
}

fn kalman_degeneracy() -> Outcome {
    let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 0.95]);
    let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let q = DMatrix::from_row_slice(2, 2, &[0.05, 0.01, 0.01, 0.1]);
    let r = DMatrix::from_element(1, 1, 0.4);
    let m0 = DVector::from_vec(vec![1.0, -0.5]);
    let p0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let model = LinearGmModel::new(
        f.clone(),
        DMatrix::zeros(2, 0),
        h.clone(),
        GaussianMixture::single(m0.clone(), p0.clone()).unwrap(),
        GaussianMixture::single(DVector::zeros(2), q.clone()).unwrap(),
        GaussianMixture::single(DVector::zeros(1), r.clone()).unwrap(),
        3,
    )
    .unwrap();
    let traj = simulate_truth(&model, 100, 12);
    let trace = run_filter(&model, &traj.measurements).unwrap();
    let (mut m, mut p) = (m0, p0);
    let mut worst = 0.0f64;
    for (k, y) in traj.measurements.iter().enumerate() {
        m = &f * &m;
        p = &f * &p * f.transpose() + &q;
        let s = &h * &p * h.transpose() + &r;
        let gain = &p * h.transpose() * s.try_inverse().unwrap();
        m = &m + &gain * (y - &h * &m);
        let ikh = DMatrix::identity(2, 2) - &gain * &h;
        p = &ikh * &p * ikh.transpose() + &gain * &r * gain.transpose();
        let rec = &trace.records[k + 1];
        worst = worst.max((&rec.mean - &m).amax()).max((&rec.cov - &p).amax());
    }
    check(worst < KALMAN_TOL, format!("100 steps, max |Δ| = {worst:.2e} (tol {KALMAN_TOL:.0e})"))
}

fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_gmnds");
    let dir = std::env::temp_dir().join(format!("gmnds-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let gm = dir.join("gm.json");
    std::fs::write(&gm, serde_json::to_string(&random_gm(6000, 2, 3)).unwrap()).unwrap();
    let gm = gm.to_str().unwrap();
    let law = dir.join("law.json");
    let law = law.to_str().unwrap();
    let invocations: Vec<Vec<&str>> = vec![
        vec!["gm", "sample", "--gm", gm, "--count", "200", "--seed", "5"],
        vec!["gm", "condense", "--gm", gm, "--target", "2"],
        vec!["nds", "params", "--gm", gm, "--out", law],
        vec!["gx2", "sample", "--law", law, "--count", "200", "--seed", "5"],
        vec!["gx2", "quantile", "--law", law, "--p", "0.05,0.5,0.95"],
        vec!["test", "static", "--gm", gm, "--samples", "500", "--seed", "5"],
        vec!["test", "sum", "--gm", gm, "--gm", gm, "--samples", "500", "--seed", "5"],
        vec!["filter", "simulate", "--steps", "50", "--seed", "5"],
        vec!["filter", "run", "--steps", "30", "--seed", "5"],
        vec!["filter", "calibrate", "--runs", "3", "--steps", "30", "--count", "5", "--seed", "5"],
    ];
    let mut identical = 0;
    for args in &invocations {
        let run = || {
            let out = Command::new(bin).args(args).output().unwrap();
            assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
            let file = args.iter().position(|a| *a == "--out").map(|i| std::fs::read(args[i + 1]).unwrap());
            (out.stdout, file)
        };
        if run() == run() {
            identical += 1;
        }
    }
    check(
        identical == invocations.len(),
        format!("{identical}/{} commands byte-identical across repeats", invocations.len()),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: &[Criterion] = &[
        ("chi-square reduction", chi2_reduction),
        ("mean identity", mean_identity),
        ("offset and dof invariants", offset_invariant),
        ("Monte Carlo agreement", monte_carlo_agreement),
        ("coverage calibration", coverage),
        ("Ruben vs Imhof", ruben_vs_imhof),
        ("quantile contract", quantile_contract),
        ("construction equivalence", construction_equivalence),
        ("filter level and power", filter_level_and_power),
        ("Kalman degeneracy", kalman_degeneracy),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} {:>2} {name}: {} [{:.1}s]", i + 1, o.detail, start.elapsed().as_secs_f64());
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
