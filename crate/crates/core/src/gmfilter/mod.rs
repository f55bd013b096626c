//! Exact Gaussian-mixture Bayes filter for linear models with mixture prior,
//! process noise and measurement noise, plus the simulation and diagnostics
//! that feed NDS consistency tests.

mod consistency;
mod diagnostics;
mod model;

pub use consistency::{consistency_run, ConsistencyConfig, ConsistencyOutcome, TestMode, TestSchedule};
pub use diagnostics::{autocorrelation, error_series, select_test_steps, ErrorPoint, TestSteps};
pub use model::LinearGmModel;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussmix::{log_sum_exp, GaussianComponent, GaussianMixture};
use crate::linalg::{cholesky_lower, symmetrize};
use crate::rng::substream;

/// Prediction through the dynamics: one component per (posterior, process
/// noise) pair, posterior index outermost.
pub fn time_update(post: &GaussianMixture, model: &LinearGmModel, u: &DVector<f64>) -> Result<GaussianMixture> {
    if post.dim() != model.state_dim() {
        return Err(Error::DimensionMismatch { expected: model.state_dim(), got: post.dim(), context: "posterior" });
    }
    if u.len() != model.input_dim() {
        return Err(Error::DimensionMismatch { expected: model.input_dim(), got: u.len(), context: "control input" });
    }
    let f = model.f();
    let drift = model.b() * u;
    let mut parts = Vec::with_capacity(post.len() * model.process_noise().len());
    for d in post.components() {
        let mean = f * d.mean() + &drift;
        let cov = f * d.cov() * f.transpose();
        for w in model.process_noise().components() {
            parts.push((d.weight() * w.weight(), &mean + w.mean(), symmetrize(&(&cov + w.cov()))));
        }
    }
    GaussianMixture::from_parts(parts)
}

/// Bayes update on `y`. Returns the posterior and the predicted-measurement
/// mixture; component order is prior index outermost.
pub fn measurement_update(
    prior: &GaussianMixture,
    model: &LinearGmModel,
    y: &DVector<f64>,
) -> Result<(GaussianMixture, GaussianMixture)> {
    if y.len() != model.meas_dim() {
        return Err(Error::DimensionMismatch { expected: model.meas_dim(), got: y.len(), context: "measurement" });
    }
    if prior.dim() != model.state_dim() {
        return Err(Error::DimensionMismatch { expected: model.state_dim(), got: prior.dim(), context: "prior" });
    }
    let h = model.h();
    let n = model.state_dim();
    let eye = DMatrix::<f64>::identity(n, n);
    let noise = model.meas_noise().components();
    let mut log_w = Vec::with_capacity(prior.len() * noise.len());
    let mut post = Vec::with_capacity(log_w.capacity());
    let mut pred = Vec::with_capacity(log_w.capacity());
    for l in prior.components() {
        let hm = h * l.mean();
        let ph = l.cov() * h.transpose();
        let hph = h * &ph;
        for v in noise {
            let s = symmetrize(&(&hph + v.cov()));
            let chol = cholesky_lower(&s, "innovation covariance")?;
            let pred_mean = &hm + v.mean();
            // K = P Hᵀ S⁻¹ via the factor of S
            let kt = chol.solve_lower_triangular(&ph.transpose()).expect("positive diagonal");
            let kt = chol.transpose().solve_upper_triangular(&kt).expect("positive diagonal");
            let k = kt.transpose();
            let innov = y - &pred_mean;
            let ikh = &eye - &k * h;
            let cov = symmetrize(&(&ikh * l.cov() * ikh.transpose() + &k * v.cov() * k.transpose()));
            let pred_comp = GaussianComponent::new(l.weight() * v.weight(), pred_mean, s)?;
            log_w.push(l.weight().ln() + v.weight().ln() + pred_comp.log_pdf(y));
            post.push((l.mean() + &k * innov, cov));
            pred.push(pred_comp);
        }
    }
    let total = log_sum_exp(&log_w);
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !total.is_finite() {
        return Err(Error::MeasurementInconsistent { max_log_likelihood: max });
    }
    let parts: Vec<_> = post
        .into_iter()
        .zip(&log_w)
        .map(|((m, c), lw)| ((lw - total).exp(), m, c))
        .filter(|(w, _, _)| *w > 0.0)
        .collect();
    Ok((GaussianMixture::from_parts(parts)?, GaussianMixture::new(pred)?))
}

/// Output of one filter cycle.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub posterior: GaussianMixture,
    pub pred_meas: GaussianMixture,
    /// Component count before condensation.
    pub raw_components: usize,
}

/// Time update, measurement update, then condensation to `g_max`.
pub fn step(post: &GaussianMixture, model: &LinearGmModel, u: &DVector<f64>, y: &DVector<f64>) -> Result<StepOutput> {
    let prior = time_update(post, model, u)?;
    let (raw, pred_meas) = measurement_update(&prior, model, y)?;
    let raw_components = raw.len();
    Ok(StepOutput { posterior: raw.condense(model.g_max())?, pred_meas, raw_components })
}

/// One filter time step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub k: usize,
    pub posterior: GaussianMixture,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Absent at `k = 0`.
    pub pred_meas: Option<GaussianMixture>,
    pub truth: Option<DVector<f64>>,
    pub measurement: Option<DVector<f64>>,
}

/// Filter history from the initial prior (`k = 0`) onward.
#[derive(Debug, Clone)]
pub struct FilterTrace {
    pub records: Vec<StepRecord>,
}

impl FilterTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with one row per step: truth, measurement, MMSE mean, variances,
    /// error and 2σ bound per coordinate. Unknown fields are left empty.
    pub fn to_csv(&self) -> String {
        let n = self.records.first().map_or(0, |r| r.mean.len());
        let p = self.records.iter().find_map(|r| r.measurement.as_ref().map(|y| y.len())).unwrap_or(0);
        let mut header = vec!["step".to_string()];
        for (prefix, count) in [("x", n), ("y", p), ("mean", n), ("var", n), ("err", n), ("bound", n)] {
            header.extend((0..count).map(|i| format!("{prefix}{i}")));
        }
        let mut out = header.join(",");
        out.push('\n');
        let fmt = |v: f64| format!("{v:.12e}");
        for r in &self.records {
            let mut row = vec![r.k.to_string()];
            match &r.truth {
                Some(x) => row.extend(x.iter().map(|v| fmt(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), n)),
            }
            match &r.measurement {
                Some(y) => row.extend(y.iter().map(|v| fmt(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), p)),
            }
            row.extend(r.mean.iter().map(|v| fmt(*v)));
            row.extend(r.cov.diagonal().iter().map(|v| fmt(*v)));
            match &r.truth {
                Some(x) => row.extend((x - &r.mean).iter().map(|v| fmt(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), n)),
            }
            row.extend(r.cov.diagonal().iter().map(|v| fmt(2.0 * v.sqrt())));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn record(k: usize, posterior: GaussianMixture, pred_meas: Option<GaussianMixture>) -> Result<StepRecord> {
    let (mean, cov) = posterior.moments()?;
    Ok(StepRecord { k, posterior, mean, cov, pred_meas, truth: None, measurement: None })
}

/// Ground truth states `x_0..=x_steps` and measurements `y_1..=y_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.measurements.len()
    }

    /// `y_k` for `k ≥ 1`.
    pub fn measurement(&self, k: usize) -> &DVector<f64> {
        &self.measurements[k - 1]
    }
}

/// Draws `x_0` from the prior and propagates with zero control input.
pub fn simulate_truth(model: &LinearGmModel, steps: usize, seed: u64) -> Trajectory {
    let mut rng = substream(seed, 0);
    let mut x = model.prior().draw(&mut rng);
    let drift = model.b() * DVector::zeros(model.input_dim());
    let mut states = Vec::with_capacity(steps + 1);
    let mut measurements = Vec::with_capacity(steps);
    states.push(x.clone());
    for _ in 0..steps {
        x = model.f() * &x + &drift + model.process_noise().draw(&mut rng);
        measurements.push(model.h() * &x + model.meas_noise().draw(&mut rng));
        states.push(x.clone());
    }
    Trajectory { states, measurements }
}

/// Runs the filter over recorded measurements with zero control input.
pub fn run_filter(model: &LinearGmModel, measurements: &[DVector<f64>]) -> Result<FilterTrace> {
    let u = DVector::zeros(model.input_dim());
    let mut records = Vec::with_capacity(measurements.len() + 1);
    let mut post = model.prior().clone();
    records.push(record(0, post.clone(), None)?);
    for (i, y) in measurements.iter().enumerate() {
        let out = step(&post, model, &u, y)?;
        post = out.posterior;
        let mut r = record(i + 1, post.clone(), Some(out.pred_meas))?;
        r.measurement = Some(y.clone());
        records.push(r);
    }
    Ok(FilterTrace { records })
}

/// Filters a simulated trajectory and attaches the truth to the trace.
pub fn run_on_trajectory(model: &LinearGmModel, traj: &Trajectory) -> Result<FilterTrace> {
    let mut trace = run_filter(model, &traj.measurements)?;
    for (r, x) in trace.records.iter_mut().zip(&traj.states) {
        r.truth = Some(x.clone());
    }
    Ok(trace)
}
