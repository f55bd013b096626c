use rand::Rng;

use super::{check_tol, chunked, inversion, quantile_by_root, GenChi2, GenChi2Mixture, MAX_CDF_TOL};
use crate::error::{Error, Result};

/// Law of `Σ_c Q_c` for independent `Q_c`, each a gen-χ² mixture.
///
/// This is the factored form of the super-index mixture: its characteristic
/// function is `Π_c Σ_g η_{c,g} φ_{c,g}`, so the CDF costs `O(Σ_c G_c)` per
/// quadrature node instead of `O(Π_c G_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependentSum {
    factors: Vec<GenChi2Mixture>,
}

impl IndependentSum {
    pub fn new(factors: Vec<GenChi2Mixture>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::invalid("an independent sum needs at least one term"));
        }
        Ok(Self { factors })
    }

    pub fn single(g: GenChi2) -> Self {
        Self { factors: vec![GenChi2Mixture::single(g)] }
    }

    pub fn factors(&self) -> &[GenChi2Mixture] {
        &self.factors
    }

    /// Number of components of the expanded mixture, `Π_c G_c`.
    pub fn expanded_len(&self) -> f64 {
        self.factors.iter().map(|f| f.len() as f64).product()
    }

    pub fn mean(&self) -> f64 {
        self.factors.iter().map(GenChi2Mixture::mean).sum()
    }

    pub fn variance(&self) -> f64 {
        self.factors.iter().map(GenChi2Mixture::variance).sum()
    }

    pub fn support_min(&self) -> f64 {
        self.factors.iter().map(GenChi2Mixture::support_min).sum()
    }

    pub fn cdf(&self, x: f64, tol: f64) -> Result<f64> {
        check_tol(tol)?;
        if x <= self.support_min() {
            return Ok(0.0);
        }
        Ok(inversion::invert(self, x, tol)?.value)
    }

    pub fn quantile(&self, p: f64, tol: f64) -> Result<f64> {
        let ctol = (tol * 1e-2).min(MAX_CDF_TOL);
        quantile_by_root(|x| self.cdf(x, ctol), p, tol, self.support_min(), self.mean(), self.variance().sqrt())
    }

    pub fn sample(&self, count: usize, seed: u64) -> Vec<f64> {
        chunked(count, seed, |rng| self.draw(rng))
    }

    pub(crate) fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        self.factors.iter().map(|f| f.draw(rng)).sum()
    }
}
