//! Ruben's expansion of a positive-definite quadratic form as a mixture of
//! scaled central chi-square laws.
//!
//! With `β = min wⱼ`, `ρⱼ = β/wⱼ` and `γⱼ = 1 − ρⱼ`,
//!
//! ```text
//! P(Q ≤ x) = Σₘ aₘ F_{K+2m}((x − t)/β)
//! a₀ = exp(−½Σλⱼ) Πⱼ ρⱼ^{kⱼ/2}
//! aₘ = (1/2m) Σ_{r=1..m} d_r a_{m−r},   d_r = Σⱼ kⱼγⱼʳ + r λⱼ ρⱼ γⱼ^{r−1}
//! ```
//!
//! Every `aₘ ≥ 0` and `Σ aₘ = 1`, so the truncation error after `N` terms is
//! at most `(1 − Σ_{m<N} aₘ) F_{K+2N}`.

use serde::Serialize;

use super::GenChi2;
use crate::error::{Error, Result};
use crate::special::{gamma_p, ln_gamma};

pub const DEFAULT_RUBEN_TERMS: usize = 200;

/// Series value with its truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RubenCdf {
    pub value: f64,
    pub error_bound: f64,
    pub terms: usize,
}

/// Precomputed series coefficients for one law.
#[derive(Debug, Clone)]
pub struct RubenSeries {
    coeffs: Vec<f64>,
    deficit: f64,
    beta: f64,
    half_dof: f64,
    t: f64,
    ln_shift: Vec<f64>,
}

impl RubenSeries {
    /// Computes up to `max_terms` coefficients, stopping early once the
    /// remaining coefficient mass drops to `target_deficit` (if positive).
    pub fn new(g: &GenChi2, max_terms: usize, target_deficit: f64) -> Result<Self> {
        if !g.is_positive() {
            return Err(Error::MethodInapplicable("ruben series requires all coefficients positive"));
        }
        let beta = g.w().iter().copied().fold(f64::INFINITY, f64::min);
        let terms: Vec<(f64, f64, f64)> = g
            .terms()
            .map(|(w, k, l)| {
                let rho = beta / w;
                (k, l, rho)
            })
            .collect();
        let ln_a0: f64 = terms.iter().map(|&(k, l, rho)| -0.5 * l + 0.5 * k * rho.ln()).sum();
        if ln_a0 < -700.0 {
            return Err(Error::MethodInapplicable("ruben coefficients underflow"));
        }
        let mut coeffs = vec![ln_a0.exp()];
        let mut d: Vec<f64> = vec![0.0];
        let mut gamma_pow: Vec<f64> = vec![1.0; terms.len()]; // γⱼ^{r-1}
        let mut deficit = 1.0 - coeffs[0];
        while coeffs.len() < max_terms && !(target_deficit > 0.0 && deficit <= target_deficit) {
            let r = coeffs.len();
            let mut dr = 0.0;
            for (j, &(k, l, rho)) in terms.iter().enumerate() {
                let gm1 = gamma_pow[j];
                let gamma = 1.0 - rho;
                dr += k * gm1 * gamma + r as f64 * l * rho * gm1;
                gamma_pow[j] = gm1 * gamma;
            }
            d.push(dr);
            let s: f64 = (1..=r).map(|i| d[i] * coeffs[r - i]).sum();
            let a = s / (2.0 * r as f64);
            coeffs.push(a);
            deficit -= a;
        }
        let half_dof = 0.5 * g.dof() as f64;
        let ln_shift = (0..=coeffs.len()).map(|m| (half_dof + m as f64).ln()).collect();
        Ok(Self { coeffs, deficit: deficit.max(0.0), beta, half_dof, t: g.t(), ln_shift })
    }

    /// `1 − Σ aₘ` over the computed coefficients.
    pub fn mass_deficit(&self) -> f64 {
        self.deficit
    }

    pub fn terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn cdf(&self, x: f64) -> RubenCdf {
        let n = self.coeffs.len();
        if x <= self.t {
            return RubenCdf { value: 0.0, error_bound: 0.0, terms: n };
        }
        let z = 0.5 * (x - self.t) / self.beta;
        let a = self.half_dof;
        let ln_z = z.ln();
        let mut p = gamma_p(a, z);
        let mut ln_term = a * ln_z - z - ln_gamma(a + 1.0);
        let mut value = 0.0;
        for (m, c) in self.coeffs.iter().enumerate() {
            value += c * p.max(0.0);
            // P(a+m+1, z) = P(a+m, z) − z^{a+m} e^{−z} / Γ(a+m+1)
            p -= ln_term.exp();
            ln_term += ln_z - self.ln_shift[m + 1];
        }
        RubenCdf { value: value.clamp(0.0, 1.0), error_bound: self.deficit * p.clamp(0.0, 1.0), terms: n }
    }
}
