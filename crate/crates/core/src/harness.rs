//! Monte Carlo validation and calibration experiments.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussmix::GaussianMixture;
use crate::genchi2::GenChi2Mixture;
use crate::gmfilter::{consistency_run, ConsistencyConfig, LinearGmModel};
use crate::hypotest::{critical_threshold, NdsTestResult, P_VALUE_TOL};
use crate::nds::{gm_nds_dist, quad_form_coeffs, sum_nds_dist};
use crate::rng::derive_seed;
use crate::special::chi2_cdf;

/// Points on which [`CdfComparison`] reports both CDFs.
pub const GRID_POINTS: usize = 101;

/// Empirical CDF of sampled statistics against a reference CDF.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfComparison {
    pub grid: Vec<f64>,
    pub empirical: Vec<f64>,
    pub theoretical: Vec<f64>,
    /// Supremum distance over the grid and every sample point.
    pub ks_distance: f64,
    pub sample_count: usize,
}

impl CdfComparison {
    /// Builds the comparison from samples; `cdf` must be nondecreasing.
    pub fn new(mut samples: Vec<f64>, mut cdf: impl FnMut(f64) -> Result<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("no samples to compare"));
        }
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        let mut ks = 0.0f64;
        for (i, &q) in samples.iter().enumerate() {
            let f = cdf(q)?;
            ks = ks.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
        }
        let hi = *samples.last().unwrap();
        let lo = samples[0].min(0.0);
        let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64).collect();
        let empirical: Vec<f64> = grid.iter().map(|&x| ecdf(&samples, x)).collect();
        let theoretical = grid.iter().map(|&x| cdf(x)).collect::<Result<Vec<f64>>>()?;
        for (e, t) in empirical.iter().zip(&theoretical) {
            ks = ks.max((e - t).abs());
        }
        Ok(Self { grid, empirical, theoretical, ks_distance: ks, sample_count: samples.len() })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,empirical,theoretical\n");
        for ((x, e), t) in self.grid.iter().zip(&self.empirical).zip(&self.theoretical) {
            out.push_str(&format!("{x:.12e},{e:.12e},{t:.12e}\n"));
        }
        out
    }
}

fn ecdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|v| *v <= x) as f64 / sorted.len() as f64
}

/// Equal-width histogram of sampled statistics with expected counts under
/// the reference law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub expected: Vec<f64>,
}

impl Histogram {
    pub fn new(samples: &[f64], bins: usize, mut cdf: impl FnMut(f64) -> Result<f64>) -> Result<Self> {
        if bins == 0 || samples.is_empty() {
            return Err(Error::invalid("histogram needs samples and at least one bin"));
        }
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0usize; bins];
        for &q in samples {
            let b = (((q - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let n = samples.len() as f64;
        let mut prev = cdf(edges[0])?;
        let mut expected = Vec::with_capacity(bins);
        for &e in &edges[1..] {
            let f = cdf(e)?;
            expected.push(n * (f - prev));
            prev = f;
        }
        Ok(Self { edges, counts, expected })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count,expected\n");
        for (i, (c, e)) in self.counts.iter().zip(&self.expected).enumerate() {
            out.push_str(&format!("{:.12e},{:.12e},{c},{e:.12e}\n", self.edges[i], self.edges[i + 1]));
        }
        out
    }
}

/// Sampled NDS statistics of a mixture against the exact law and against
/// the central χ² of the same dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticValidation {
    pub law: GenChi2Mixture,
    pub exact: CdfComparison,
    pub naive: CdfComparison,
    pub histogram: Histogram,
}

/// Bins used by [`validate_static`] for its histogram.
pub const HISTOGRAM_BINS: usize = 30;

/// NDS statistics of `samples` draws from `gm` against its own moments.
pub fn nds_samples(gm: &GaussianMixture, samples: usize, seed: u64) -> Result<Vec<f64>> {
    let (mean, cov) = gm.moments()?;
    let coeffs = quad_form_coeffs(&mean, &cov)?;
    Ok(gm.sample(samples, seed).iter().map(|x| coeffs.eval(x)).collect())
}

pub fn validate_static(gm: &GaussianMixture, samples: usize, seed: u64) -> Result<StaticValidation> {
    let law = gm_nds_dist(gm)?;
    let qs = nds_samples(gm, samples, seed)?;
    let eval = law.evaluator(P_VALUE_TOL)?;
    let histogram = Histogram::new(&qs, HISTOGRAM_BINS, |x| eval.cdf(x))?;
    let n = gm.dim() as f64;
    let naive = CdfComparison::new(qs.clone(), |x| Ok(chi2_cdf(x, n)))?;
    let exact = CdfComparison::new(qs, |x| eval.cdf(x))?;
    Ok(StaticValidation { law, exact, naive, histogram })
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn binomial_ci(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Normal quantile of the reported 95% intervals.
pub const CI_Z: f64 = 1.959963984540054;

/// Exceedance of the summed NDS statistic over its critical threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub alpha: f64,
    pub tau: f64,
    pub samples: usize,
    pub exceedances: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub truncation_mass: f64,
}

/// Draws `samples` joint realizations of independent `gms`, sums their NDS
/// statistics and counts how often the sum reaches `τ`.
pub fn validate_sum(
    gms: &[GaussianMixture],
    samples: usize,
    alpha: f64,
    top_g: Option<usize>,
    seed: u64,
) -> Result<CoverageReport> {
    if samples == 0 {
        return Err(Error::invalid("samples must be positive"));
    }
    let law = sum_nds_dist(gms, top_g)?;
    let tau = critical_threshold(&law.mixture, alpha)?;
    let mut total = vec![0.0; samples];
    for (c, gm) in gms.iter().enumerate() {
        for (t, q) in total.iter_mut().zip(nds_samples(gm, samples, derive_seed(seed, c as u64))?) {
            *t += q;
        }
    }
    let exceedances = total.iter().filter(|&&q| q >= tau).count();
    let (ci_low, ci_high) = binomial_ci(exceedances, samples, CI_Z);
    Ok(CoverageReport {
        alpha,
        tau,
        samples,
        exceedances,
        rate: exceedances as f64 / samples as f64,
        ci_low,
        ci_high,
        truncation_mass: law.truncation_mass,
    })
}

/// Rejection statistics of repeated consistency runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub runs: usize,
    pub rejections: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_p_value: f64,
    pub results: Vec<NdsTestResult>,
}

/// Runs `runs` independent consistency runs on seeds derived from `seed`.
pub fn calibrate_filter(
    model_true: &LinearGmModel,
    model_filter: &LinearGmModel,
    config: &ConsistencyConfig,
    runs: usize,
    seed: u64,
) -> Result<CalibrationReport> {
    if runs == 0 {
        return Err(Error::invalid("runs must be positive"));
    }
    let results = (0..runs)
        .into_par_iter()
        .map(|i| consistency_run(model_true, model_filter, config, derive_seed(seed, i as u64)).map(|o| o.result))
        .collect::<Result<Vec<_>>>()?;
    let rejections = results.iter().filter(|r| r.reject).count();
    let (ci_low, ci_high) = binomial_ci(rejections, runs, CI_Z);
    Ok(CalibrationReport {
        runs,
        rejections,
        rate: rejections as f64 / runs as f64,
        ci_low,
        ci_high,
        mean_p_value: results.iter().map(|r| r.p_value).sum::<f64>() / runs as f64,
        results,
    })
}
