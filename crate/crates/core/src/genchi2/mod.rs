//! Generalized chi-square laws and their mixtures.
//!
//! A [`GenChi2`] is the law of `Q = Σⱼ wⱼ χ²(kⱼ, λⱼ) + t`, a weighted sum of
//! independent non-central chi-square variables plus an offset. CDFs come
//! from two independent routes: characteristic-function inversion
//! ([`GenChi2::cdf_imhof`]) and, for positive coefficients, Ruben's mixture
//! of central chi-square laws ([`GenChi2::cdf_ruben`]).

mod inversion;
mod quantile;
mod ruben;
mod sum;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, CHUNK};

pub use inversion::InversionReport;
pub use quantile::{quantile_by_root, QUANTILE_TOL};
pub use ruben::{RubenCdf, RubenSeries, DEFAULT_RUBEN_TERMS};
pub use sum::IndependentSum;

/// Relative separation below which two coefficients count as equal.
pub const COEFF_RTOL: f64 = 1e-8;

/// Upper limit on the tolerance accepted by the inversion CDF.
pub const MAX_CDF_TOL: f64 = 1e-3;

/// Generalized chi-square law with parameters `(w, k, λ, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GenChi2Json", into = "GenChi2Json")]
pub struct GenChi2 {
    w: Vec<f64>,
    k: Vec<u32>,
    lambda: Vec<f64>,
    t: f64,
}

#[derive(Serialize, Deserialize)]
struct GenChi2Json {
    w: Vec<f64>,
    k: Vec<u32>,
    lambda: Vec<f64>,
    t: f64,
}

impl TryFrom<GenChi2Json> for GenChi2 {
    type Error = Error;
    fn try_from(j: GenChi2Json) -> Result<Self> {
        GenChi2::new(j.w, j.k, j.lambda, j.t)
    }
}

impl From<GenChi2> for GenChi2Json {
    fn from(g: GenChi2) -> Self {
        GenChi2Json { w: g.w, k: g.k, lambda: g.lambda, t: g.t }
    }
}

impl GenChi2 {
    pub fn new(w: Vec<f64>, k: Vec<u32>, lambda: Vec<f64>, t: f64) -> Result<Self> {
        if w.is_empty() || w.len() != k.len() || w.len() != lambda.len() {
            return Err(Error::invalid("w, k and lambda must be nonempty and equally long"));
        }
        if w.iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return Err(Error::invalid("coefficients w must be finite and nonzero"));
        }
        if k.contains(&0) {
            return Err(Error::invalid("degrees of freedom must be positive"));
        }
        if lambda.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("non-centralities must be finite and nonnegative"));
        }
        if !t.is_finite() {
            return Err(Error::invalid("offset must be finite"));
        }
        for i in 0..w.len() {
            for j in (i + 1)..w.len() {
                if coeffs_equal(w[i], w[j]) {
                    return Err(Error::invalid(format!("coefficients {} and {} are not distinct", w[i], w[j])));
                }
            }
        }
        Ok(Self { w, k, lambda, t })
    }

    /// Central chi-square with `dof` degrees of freedom.
    pub fn central(dof: u32) -> Self {
        Self::new(vec![1.0], vec![dof], vec![0.0], 0.0).expect("valid")
    }

    /// Builds a law from per-term parameters, merging coefficients that agree
    /// within [`COEFF_RTOL`] (degrees of freedom and non-centralities add).
    pub fn merged(terms: impl IntoIterator<Item = (f64, u32, f64)>, t: f64) -> Result<Self> {
        let mut terms: Vec<(f64, u32, f64)> = terms.into_iter().collect();
        terms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut w: Vec<f64> = Vec::new();
        let mut k: Vec<u32> = Vec::new();
        let mut lambda: Vec<f64> = Vec::new();
        let mut sum_wk = 0.0;
        for (wi, ki, li) in terms {
            if let Some(last) = w.last_mut() {
                if coeffs_equal(*last, wi) {
                    let kl = k.last_mut().unwrap();
                    sum_wk += wi * ki as f64;
                    *kl += ki;
                    *lambda.last_mut().unwrap() += li;
                    *last = sum_wk / *kl as f64;
                    continue;
                }
            }
            sum_wk = wi * ki as f64;
            w.push(wi);
            k.push(ki);
            lambda.push(li);
        }
        Self::new(w, k, lambda, t)
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn k(&self) -> &[u32] {
        &self.k
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Total degrees of freedom `Σ kⱼ`.
    pub fn dof(&self) -> u32 {
        self.k.iter().sum()
    }

    pub fn is_positive(&self) -> bool {
        self.w.iter().all(|&w| w > 0.0)
    }

    /// Same law shifted to offset `t`.
    pub fn with_offset(&self, t: f64) -> Self {
        Self { t, ..self.clone() }
    }

    pub fn mean(&self) -> f64 {
        self.terms().map(|(w, k, l)| w * (k + l)).sum::<f64>() + self.t
    }

    pub fn variance(&self) -> f64 {
        2.0 * self.terms().map(|(w, k, l)| w * w * (k + 2.0 * l)).sum::<f64>()
    }

    /// Infimum of the support (`t` for positive coefficients).
    pub fn support_min(&self) -> f64 {
        if self.is_positive() {
            self.t
        } else {
            f64::NEG_INFINITY
        }
    }

    pub(crate) fn terms(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.w.iter().zip(&self.k).zip(&self.lambda).map(|((&w, &k), &l)| (w, k as f64, l))
    }

    /// `P(Q ≤ x)` by numerical inversion of the characteristic function,
    /// with absolute error at most `tol`.
    pub fn cdf_imhof(&self, x: f64, tol: f64) -> Result<f64> {
        Ok(self.cdf_imhof_report(x, tol)?.value)
    }

    /// [`cdf_imhof`](Self::cdf_imhof) with the quadrature diagnostics.
    pub fn cdf_imhof_report(&self, x: f64, tol: f64) -> Result<InversionReport> {
        check_tol(tol)?;
        if self.is_positive() && x <= self.t {
            return Ok(InversionReport::exact(0.0));
        }
        inversion::invert(&IndependentSum::single(self.clone()), x, tol)
    }

    /// `P(Q ≤ x)` from `terms` terms of Ruben's series. Only valid when every
    /// coefficient is positive.
    pub fn cdf_ruben(&self, x: f64, terms: usize) -> Result<RubenCdf> {
        if terms < 50 {
            return Err(Error::invalid("ruben series needs at least 50 terms"));
        }
        let series = RubenSeries::new(self, terms, 0.0)?;
        Ok(series.cdf(x))
    }

    /// Draws `count` variates; draw `i` uses substream `i / CHUNK`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<f64> {
        chunked(count, seed, |rng| self.draw(rng))
    }

    pub(crate) fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let mut q = self.t;
        for (w, k, l) in self.terms() {
            let delta = l.sqrt();
            let mut s = 0.0;
            for i in 0..k as usize {
                let z: f64 = rng.sample(StandardNormal);
                let v = if i == 0 { z + delta } else { z };
                s += v * v;
            }
            q += w * s;
        }
        q
    }
}

pub(crate) fn coeffs_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= COEFF_RTOL * a.abs().max(b.abs())
}

pub(crate) fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol <= MAX_CDF_TOL) {
        return Err(Error::invalid(format!("tolerance {tol} outside (0, {MAX_CDF_TOL}]")));
    }
    Ok(())
}

pub(crate) fn chunked<F>(count: usize, seed: u64, mut draw: F) -> Vec<f64>
where
    F: FnMut(&mut rand_chacha::ChaCha8Rng) -> f64,
{
    let mut out = Vec::with_capacity(count);
    let mut stream = 0u64;
    while out.len() < count {
        let mut rng = substream(seed, stream);
        let take = CHUNK.min(count - out.len());
        for _ in 0..take {
            out.push(draw(&mut rng));
        }
        stream += 1;
    }
    out
}

/// Weighted mixture of generalized chi-square laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureJson", into = "MixtureJson")]
pub struct GenChi2Mixture {
    weights: Vec<f64>,
    components: Vec<GenChi2>,
}

#[derive(Serialize, Deserialize)]
struct MixtureJson {
    weights: Vec<f64>,
    components: Vec<GenChi2>,
}

impl TryFrom<MixtureJson> for GenChi2Mixture {
    type Error = Error;
    fn try_from(j: MixtureJson) -> Result<Self> {
        GenChi2Mixture::new(j.weights, j.components)
    }
}

impl From<GenChi2Mixture> for MixtureJson {
    fn from(m: GenChi2Mixture) -> Self {
        MixtureJson { weights: m.weights, components: m.components }
    }
}

impl GenChi2Mixture {
    /// Weights must be positive and sum to one within 1e-6; they are
    /// renormalized exactly.
    pub fn new(weights: Vec<f64>, components: Vec<GenChi2>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::invalid("weights and components must be nonempty and equally long"));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid("mixture weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > crate::gaussmix::WEIGHT_RENORM_TOL {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        let weights = if (total - 1.0).abs() <= f64::EPSILON * weights.len() as f64 {
            weights
        } else {
            weights.into_iter().map(|w| w / total).collect()
        };
        Ok(Self { weights, components })
    }

    pub fn single(g: GenChi2) -> Self {
        Self { weights: vec![1.0], components: vec![g] }
    }

    /// Rescales weights to sum to one; used after truncation, where the
    /// retained mass is below one.
    pub(crate) fn renormalized(weights: Vec<f64>, components: Vec<GenChi2>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        Self::new(weights.into_iter().map(|w| w / total).collect(), components)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GenChi2] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &GenChi2)> {
        self.weights.iter().copied().zip(&self.components)
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(e, g)| e * g.mean()).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.iter().map(|(e, g)| e * (g.variance() + (g.mean() - m).powi(2))).sum()
    }

    pub fn support_min(&self) -> f64 {
        self.components.iter().map(GenChi2::support_min).fold(f64::INFINITY, f64::min)
    }

    /// `Σ_g η_g CDF_g(x)`; component `g` gets an error budget of
    /// `tol / (G η_g)` and uses Ruben's series when applicable.
    pub fn cdf(&self, x: f64, tol: f64) -> Result<f64> {
        self.evaluator(tol)?.cdf(x)
    }

    /// A reusable evaluator; precomputes the series coefficients once.
    pub fn evaluator(&self, tol: f64) -> Result<MixtureCdf<'_>> {
        MixtureCdf::new(self, tol)
    }

    /// CDF by inverting the mixture's characteristic function in a single
    /// integral, independent of the per-component route.
    pub fn cdf_inversion(&self, x: f64, tol: f64) -> Result<f64> {
        check_tol(tol)?;
        if x <= self.support_min() {
            return Ok(0.0);
        }
        Ok(inversion::invert(&IndependentSum::new(vec![self.clone()])?, x, tol)?.value)
    }

    /// Smallest `x` with `|CDF(x) − p| ≤ tol`, by bracketed root finding.
    pub fn quantile(&self, p: f64, tol: f64) -> Result<f64> {
        let eval = self.evaluator((tol * 1e-2).min(MAX_CDF_TOL))?;
        quantile_by_root(|x| eval.cdf(x), p, tol, self.support_min(), self.mean(), self.variance().sqrt())
    }

    pub fn sample(&self, count: usize, seed: u64) -> Vec<f64> {
        chunked(count, seed, |rng| self.draw(rng))
    }

    pub(crate) fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.components.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = i;
                break;
            }
        }
        self.components[pick].draw(rng)
    }
}

/// Per-component CDF plan for a mixture.
pub struct MixtureCdf<'a> {
    mixture: &'a GenChi2Mixture,
    plans: Vec<ComponentPlan>,
    tol: f64,
}

enum ComponentPlan {
    Series(RubenSeries),
    Inversion { tol: f64 },
}

/// Largest number of series terms tried before falling back to inversion.
const MAX_ADAPTIVE_TERMS: usize = 1500;

impl<'a> MixtureCdf<'a> {
    fn new(mixture: &'a GenChi2Mixture, tol: f64) -> Result<Self> {
        check_tol(tol)?;
        let g = mixture.len() as f64;
        let plans = mixture
            .iter()
            .map(|(eta, comp)| {
                let budget = (tol / (g * eta)).min(MAX_CDF_TOL);
                if comp.is_positive() {
                    if let Ok(s) = RubenSeries::new(comp, MAX_ADAPTIVE_TERMS, 0.5 * budget) {
                        if s.mass_deficit() <= 0.5 * budget {
                            return ComponentPlan::Series(s);
                        }
                    }
                }
                ComponentPlan::Inversion { tol: budget }
            })
            .collect();
        Ok(Self { mixture, plans, tol })
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        let mut total = 0.0;
        for ((eta, comp), plan) in self.mixture.iter().zip(&self.plans) {
            let v = match plan {
                ComponentPlan::Series(s) => s.cdf(x).value,
                ComponentPlan::Inversion { tol } => comp.cdf_imhof(x, *tol)?,
            };
            total += eta * v;
        }
        Ok(total.clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests;
