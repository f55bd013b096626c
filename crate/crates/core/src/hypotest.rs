//! NDS consistency tests with critical region `[τ, ∞)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genchi2::{GenChi2Mixture, IndependentSum, MixtureCdf, QUANTILE_TOL};
use crate::nds::SumNdsDist;

/// CDF tolerance used for reported p-values.
pub const P_VALUE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdsTestResult {
    pub statistic: f64,
    pub tau: f64,
    pub alpha: f64,
    pub p_value: f64,
    pub reject: bool,
    pub truncation_mass: f64,
}

impl NdsTestResult {
    fn new(statistic: f64, tau: f64, alpha: f64, cdf: f64, truncation_mass: f64) -> Self {
        Self { statistic, tau, alpha, p_value: (1.0 - cdf).clamp(0.0, 1.0), reject: statistic >= tau, truncation_mass }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// `τ` with `P(Q ≥ τ) = α` under the reference law.
pub fn critical_threshold(m: &GenChi2Mixture, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    m.quantile(1.0 - alpha, QUANTILE_TOL)
}

pub fn nds_test(statistic: f64, m: &GenChi2Mixture, alpha: f64) -> Result<NdsTestResult> {
    PreparedTest::new(m, alpha)?.test(statistic)
}

/// Test against an expanded sum law, reporting its truncation mass.
pub fn nds_test_sum(statistic: f64, law: &SumNdsDist, alpha: f64) -> Result<NdsTestResult> {
    let mut r = nds_test(statistic, &law.mixture, alpha)?;
    r.truncation_mass = law.truncation_mass;
    Ok(r)
}

/// Test against the exact factored law of an independent sum.
pub fn nds_test_factored(statistic: f64, law: &IndependentSum, alpha: f64) -> Result<NdsTestResult> {
    check_alpha(alpha)?;
    let tau = law.quantile(1.0 - alpha, QUANTILE_TOL)?;
    let cdf = law.cdf(statistic, P_VALUE_TOL)?;
    Ok(NdsTestResult::new(statistic, tau, alpha, cdf, 0.0))
}

/// Threshold and CDF plan computed once, for testing many statistics
/// against one reference.
pub struct PreparedTest<'a> {
    eval: MixtureCdf<'a>,
    tau: f64,
    alpha: f64,
}

impl<'a> PreparedTest<'a> {
    pub fn new(m: &'a GenChi2Mixture, alpha: f64) -> Result<Self> {
        let tau = critical_threshold(m, alpha)?;
        Ok(Self { eval: m.evaluator(P_VALUE_TOL)?, tau, alpha })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn test(&self, statistic: f64) -> Result<NdsTestResult> {
        let cdf = self.eval.cdf(statistic)?;
        Ok(NdsTestResult::new(statistic, self.tau, self.alpha, cdf, 0.0))
    }
}
