use nalgebra::DVector;
use serde::Serialize;

use super::FilterTrace;
use crate::error::{Error, Result};

/// Estimation error `x_k − μ̄_k` and its `2σ` bound per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorPoint {
    pub k: usize,
    pub error: DVector<f64>,
    pub bound: DVector<f64>,
}

/// Errors for every record that carries the true state.
pub fn error_series(trace: &FilterTrace) -> Result<Vec<ErrorPoint>> {
    let out: Vec<ErrorPoint> = trace
        .records
        .iter()
        .filter_map(|r| {
            r.truth.as_ref().map(|x| ErrorPoint {
                k: r.k,
                error: x - &r.mean,
                bound: r.cov.diagonal().map(|v| 2.0 * v.sqrt()),
            })
        })
        .collect();
    if out.is_empty() {
        return Err(Error::invalid("trace has no ground truth"));
    }
    Ok(out)
}

/// Biased sample autocorrelation `ρ(0..=max_lag)`, normalized by lag 0.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag {
        return Err(Error::invalid(format!("series of length {} is too short for lag {max_lag}", series.len())));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0: f64 = centered.iter().map(|x| x * x).sum();
    if !(c0 > 0.0) {
        return Err(Error::UndefinedAutocorrelation);
    }
    Ok((0..=max_lag).map(|lag| centered.iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum::<f64>() / c0).collect())
}

/// Chosen spacing and the resulting test steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TestSteps {
    pub spacing: usize,
    pub steps: Vec<usize>,
}

/// Smallest spacing `Δ` such that `|ρ(d)| < threshold` for every
/// `d ∈ [Δ, max_lag]` and every error coordinate; then `count` steps from
/// `start` at that spacing, cut at the end of the trace.
pub fn select_test_steps(
    trace: &FilterTrace,
    threshold: f64,
    count: usize,
    start: usize,
    max_lag: usize,
) -> Result<TestSteps> {
    if max_lag == 0 || count == 0 {
        return Err(Error::invalid("max_lag and count must be positive"));
    }
    let errors: Vec<ErrorPoint> = error_series(trace)?.into_iter().filter(|e| e.k >= 1).collect();
    let dim = errors.first().map_or(0, |e| e.error.len());
    let mut worst = vec![0.0f64; max_lag + 1];
    for i in 0..dim {
        let series: Vec<f64> = errors.iter().map(|e| e.error[i]).collect();
        for (w, r) in worst.iter_mut().zip(autocorrelation(&series, max_lag)?) {
            *w = w.max(r.abs());
        }
    }
    let mut spacing = None;
    for lag in (1..=max_lag).rev() {
        if worst[lag] < threshold {
            spacing = Some(lag);
        } else {
            break;
        }
    }
    let spacing = spacing.ok_or(Error::SpacingNotFound { threshold, max_lag })?;
    let last = trace.records.last().map_or(0, |r| r.k);
    let steps = (0..count).map(|i| start + i * spacing).take_while(|&k| k <= last).collect();
    Ok(TestSteps { spacing, steps })
}
