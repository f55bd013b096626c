use serde::{Deserialize, Serialize};

use super::{run_on_trajectory, select_test_steps, simulate_truth, LinearGmModel, TestSteps};
use crate::error::{Error, Result};
use crate::gaussmix::GaussianMixture;
use crate::hypotest::{nds_test_factored, nds_test_sum, NdsTestResult};
use crate::nds::{gm_nds_statistic, sum_nds_dist, sum_nds_law};

/// Which quantity the NDS test examines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMode {
    /// True states against filter posteriors.
    #[default]
    State,
    /// Recorded measurements against predicted-measurement mixtures.
    Measurement,
}

/// How test steps are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TestSchedule {
    Fixed {
        start: usize,
        spacing: usize,
        count: usize,
    },
    /// Spacing from the run's own error autocorrelation.
    Auto {
        threshold: f64,
        max_lag: usize,
        start: usize,
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub steps: usize,
    pub alpha: f64,
    pub schedule: TestSchedule,
    /// Expand the sum law and keep this many heaviest components; `None`
    /// uses the exact factored law.
    pub top_g: Option<usize>,
    pub mode: TestMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyOutcome {
    pub result: NdsTestResult,
    pub test_steps: TestSteps,
}

/// Simulates with `model_true`, filters with `model_filter` and tests the
/// summed NDS statistic over the scheduled steps.
pub fn consistency_run(
    model_true: &LinearGmModel,
    model_filter: &LinearGmModel,
    config: &ConsistencyConfig,
    seed: u64,
) -> Result<ConsistencyOutcome> {
    if model_true.state_dim() != model_filter.state_dim() || model_true.meas_dim() != model_filter.meas_dim() {
        return Err(Error::invalid("true and filter models have different dimensions"));
    }
    let traj = simulate_truth(model_true, config.steps, seed);
    let trace = run_on_trajectory(model_filter, &traj)?;
    let test_steps = match config.schedule {
        TestSchedule::Fixed { start, spacing, count } => {
            if spacing == 0 || count == 0 {
                return Err(Error::invalid("spacing and count must be positive"));
            }
            let steps = (0..count).map(|i| start + i * spacing).take_while(|&k| k <= config.steps).collect();
            TestSteps { spacing, steps }
        }
        TestSchedule::Auto { threshold, max_lag, start, count } => {
            select_test_steps(&trace, threshold, count, start, max_lag)?
        }
    };
    if test_steps.steps.is_empty() {
        return Err(Error::invalid("schedule selects no steps within the run"));
    }
    let mut refs: Vec<GaussianMixture> = Vec::with_capacity(test_steps.steps.len());
    let mut statistic = 0.0;
    for &k in &test_steps.steps {
        let rec = &trace.records[k];
        let (gm, point) = match config.mode {
            TestMode::State => (&rec.posterior, &traj.states[k]),
            TestMode::Measurement => match &rec.pred_meas {
                Some(p) => (p, traj.measurement(k)),
                None => return Err(Error::invalid("measurement tests need steps k ≥ 1")),
            },
        };
        statistic += gm_nds_statistic(point, gm)?;
        refs.push(gm.clone());
    }
    let result = match config.top_g {
        Some(g) => nds_test_sum(statistic, &sum_nds_dist(&refs, Some(g))?, config.alpha)?,
        None => nds_test_factored(statistic, &sum_nds_law(&refs)?, config.alpha)?,
    };
    Ok(ConsistencyOutcome { result, test_steps })
}
