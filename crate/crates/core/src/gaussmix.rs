//! Gaussian mixtures: representation, moments, densities, sampling and
//! moment-preserving condensation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    check_symmetric, cholesky_lower, log_det_from_lower, matrix_from_rows, matrix_to_rows, solve_lower, symmetrize,
};
use crate::rng::{substream, CHUNK};

/// Tolerance inside which weights are silently renormalized to sum to one.
pub const WEIGHT_RENORM_TOL: f64 = 1e-6;

/// A weighted multivariate normal component.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    weight: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl GaussianComponent {
    /// Validates symmetry and positive definiteness of `cov`.
    pub fn new(weight: f64, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::invalid(format!("component weight {weight} must be positive")));
        }
        if cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: cov.nrows(),
                context: "component covariance",
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("component mean has non-finite entries"));
        }
        check_symmetric(&cov, "component covariance")?;
        let cov = symmetrize(&cov);
        let chol = cholesky_lower(&cov, "component covariance")?;
        Ok(Self { weight, mean, cov, chol })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower Cholesky factor of the covariance.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub(crate) fn with_weight(&self, weight: f64) -> Self {
        Self { weight, ..self.clone() }
    }

    /// Log of the unweighted normal density at `x`.
    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let n = self.dim() as f64;
        let z = solve_lower(&self.chol, &(x - &self.mean));
        -0.5 * (n * (2.0 * PI).ln() + log_det_from_lower(&self.chol) + z.norm_squared())
    }

    pub(crate) fn draw<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.chol * z
    }
}

/// A finite Gaussian mixture with weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GmJson", into = "GmJson")]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::invalid("a mixture needs at least one component"))?;
        let dim = first.dim();
        if dim == 0 {
            return Err(Error::invalid("mixture dimension must be positive"));
        }
        for c in &components {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.dim(), context: "mixture component" });
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_RENORM_TOL {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        let components = if (total - 1.0).abs() <= f64::EPSILON * components.len() as f64 {
            components
        } else {
            components
                .into_iter()
                .map(|c| {
                    let w = c.weight / total;
                    c.with_weight(w)
                })
                .collect()
        };
        Ok(Self { dim, components })
    }

    /// A one-component mixture.
    pub fn single(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![GaussianComponent::new(1.0, mean, cov)?])
    }

    /// Builds a mixture from `(weight, mean, covariance)` triples.
    pub fn from_parts(parts: Vec<(f64, DVector<f64>, DMatrix<f64>)>) -> Result<Self> {
        let comps = parts.into_iter().map(|(w, m, c)| GaussianComponent::new(w, m, c)).collect::<Result<Vec<_>>>()?;
        Self::new(comps)
    }

    /// Scalar mixture from `(weight, mean, variance)` triples.
    pub fn scalar(parts: &[(f64, f64, f64)]) -> Result<Self> {
        Self::from_parts(
            parts.iter().map(|&(w, m, v)| (w, DVector::from_element(1, m), DMatrix::from_element(1, 1, v))).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Overall mean and covariance (law of total covariance).
    pub fn moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (mean, cov) = self.raw_moments();
        cholesky_lower(&cov, "mixture covariance")?;
        Ok((mean, cov))
    }

    /// Moments without the positive-definiteness check.
    pub(crate) fn raw_moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.dim;
        let mut mean = DVector::zeros(n);
        for c in &self.components {
            mean.axpy(c.weight, &c.mean, 1.0);
        }
        let mut cov = DMatrix::zeros(n, n);
        for c in &self.components {
            let d = &c.mean - &mean;
            cov += (&c.cov + &d * d.transpose()) * c.weight;
        }
        (mean, symmetrize(&cov))
    }

    /// The single Gaussian with the mixture's mean and covariance.
    pub fn moment_matched(&self) -> Result<GaussianComponent> {
        let (mean, cov) = self.moments()?;
        GaussianComponent::new(1.0, mean, cov)
    }

    /// Log mixture density, stabilized by shifting by the largest term.
    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let terms: Vec<f64> = self.components.iter().map(|c| c.weight.ln() + c.log_pdf(x)).collect();
        log_sum_exp(&terms)
    }

    /// Draws `count` points. Draw `i` comes from substream `i / CHUNK`, so
    /// the result depends only on `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<DVector<f64>> {
        self.sample_labeled(count, seed).into_iter().map(|(_, x)| x).collect()
    }

    /// Like [`sample`](Self::sample) but also returns the selected component.
    pub fn sample_labeled(&self, count: usize, seed: u64) -> Vec<(usize, DVector<f64>)> {
        let mut out = Vec::with_capacity(count);
        let mut stream = 0u64;
        while out.len() < count {
            let mut rng = substream(seed, stream);
            let take = CHUNK.min(count - out.len());
            for _ in 0..take {
                let g = self.pick(rng.random::<f64>());
                out.push((g, self.components[g].draw(&mut rng)));
            }
            stream += 1;
        }
        out
    }

    pub(crate) fn draw<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let g = self.pick(rng.random::<f64>());
        self.components[g].draw(rng)
    }

    fn pick(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                return i;
            }
        }
        self.components.len() - 1
    }

    /// Greedy pairwise merging down to `target` components.
    ///
    /// Each step merges the pair with the smallest Runnalls bound
    /// `½[(wᵢ+wⱼ) ln|Σᵢⱼ| − wᵢ ln|Σᵢ| − wⱼ ln|Σⱼ|]` into its moment-matched
    /// Gaussian, so the mixture mean and covariance never change.
    pub fn condense(&self, target: usize) -> Result<Self> {
        if target == 0 {
            return Err(Error::invalid("condensation target must be at least 1"));
        }
        if self.len() <= target {
            return Ok(self.clone());
        }
        let mut slots: Vec<Option<(GaussianComponent, f64)>> =
            self.components.iter().map(|c| Some((c.clone(), log_det_from_lower(&c.chol)))).collect();
        let n = slots.len();
        let mut scratch = Vec::new();
        let mut cost = vec![f64::INFINITY; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, la) = slots[i].as_ref().unwrap();
                let (b, lb) = slots[j].as_ref().unwrap();
                let c = runnalls_cost(a, *la, b, *lb, &mut scratch);
                cost[i * n + j] = c;
                cost[j * n + i] = c;
            }
        }
        // cheapest partner per row, ties to the lower index
        let best_in_row = |cost: &[f64], live: &[usize], r: usize| {
            let row = &cost[r * n..(r + 1) * n];
            let mut best = (f64::INFINITY, usize::MAX);
            for &j in live {
                if j != r && (row[j] < best.0 || best.1 == usize::MAX) {
                    best = (row[j], j);
                }
            }
            best
        };
        let mut live: Vec<usize> = (0..n).collect();
        let mut best: Vec<(f64, usize)> = (0..n).map(|r| best_in_row(&cost, &live, r)).collect();
        while live.len() > target {
            let i = *live.iter().min_by(|&&x, &&y| best[x].0.total_cmp(&best[y].0).then(x.cmp(&y))).unwrap();
            let (a, b) = (i.min(best[i].1), i.max(best[i].1));
            let (ca, _) = slots[a].take().unwrap();
            let (cb, _) = slots[b].take().unwrap();
            let merged = merge_pair(&ca, &cb)?;
            let ld = log_det_from_lower(&merged.chol);
            live.retain(|&r| r != a && r != b);
            for &r in &live {
                let (c, lc) = slots[r].as_ref().unwrap();
                let v = runnalls_cost(c, *lc, &merged, ld, &mut scratch);
                cost[r * n + a] = v;
                cost[a * n + r] = v;
            }
            slots[a] = Some((merged, ld));
            let pos = live.partition_point(|&r| r < a);
            live.insert(pos, a);
            for idx in 0..live.len() {
                let r = live[idx];
                if r == a || best[r].1 == a || best[r].1 == b {
                    best[r] = best_in_row(&cost, &live, r);
                } else if cost[r * n + a] < best[r].0 {
                    best[r] = (cost[r * n + a], a);
                }
            }
        }
        let comps: Vec<GaussianComponent> = slots.into_iter().flatten().map(|(c, _)| c).collect();
        Self::new(comps)
    }
}

fn merged_moments(a: &GaussianComponent, b: &GaussianComponent) -> (f64, DVector<f64>, DMatrix<f64>) {
    let w = a.weight + b.weight;
    let (fa, fb) = (a.weight / w, b.weight / w);
    let mean = &a.mean * fa + &b.mean * fb;
    let d = &a.mean - &b.mean;
    let cov = &a.cov * fa + &b.cov * fb + (&d * d.transpose()) * (fa * fb);
    (w, mean, symmetrize(&cov))
}

fn merge_pair(a: &GaussianComponent, b: &GaussianComponent) -> Result<GaussianComponent> {
    let (w, mean, cov) = merged_moments(a, b);
    GaussianComponent::new(w, mean, cov)
}

fn runnalls_cost(a: &GaussianComponent, ld_a: f64, b: &GaussianComponent, ld_b: f64, scratch: &mut Vec<f64>) -> f64 {
    let w = a.weight + b.weight;
    let (fa, fb) = (a.weight / w, b.weight / w);
    let n = a.mean.len();
    scratch.clear();
    scratch.resize(n * n, 0.0);
    for c in 0..n {
        let dc = a.mean[c] - b.mean[c];
        for r in c..n {
            let dr = a.mean[r] - b.mean[r];
            scratch[r * n + c] = fa * a.cov[(r, c)] + fb * b.cov[(r, c)] + fa * fb * dr * dc;
        }
    }
    match log_det_in_place(scratch, n) {
        Some(ld) => 0.5 * (w * ld - a.weight * ld_a - b.weight * ld_b),
        None => f64::INFINITY,
    }
}

/// Log-determinant from an in-place Cholesky of the lower triangle of a
/// row-major `n × n` buffer; `None` if not positive definite.
fn log_det_in_place(m: &mut [f64], n: usize) -> Option<f64> {
    let mut ld = 0.0;
    for j in 0..n {
        let mut d = m[j * n + j];
        for k in 0..j {
            d -= m[j * n + k] * m[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        m[j * n + j] = d;
        ld += 2.0 * d.ln();
        for i in (j + 1)..n {
            let mut v = m[i * n + j];
            for k in 0..j {
                v -= m[i * n + k] * m[j * n + k];
            }
            m[i * n + j] = v / d;
        }
    }
    Some(ld)
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[derive(Serialize, Deserialize)]
struct ComponentJson {
    weight: f64,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct GmJson {
    dim: usize,
    components: Vec<ComponentJson>,
}

impl TryFrom<GmJson> for GaussianMixture {
    type Error = Error;

    fn try_from(j: GmJson) -> Result<Self> {
        let comps = j
            .components
            .into_iter()
            .map(|c| {
                let cov = matrix_from_rows(&c.cov, "cov")?;
                GaussianComponent::new(c.weight, DVector::from_vec(c.mean), cov)
            })
            .collect::<Result<Vec<_>>>()?;
        let gm = GaussianMixture::new(comps)?;
        if gm.dim != j.dim {
            return Err(Error::DimensionMismatch { expected: j.dim, got: gm.dim, context: "mixture json dim" });
        }
        Ok(gm)
    }
}

impl From<GaussianMixture> for GmJson {
    fn from(gm: GaussianMixture) -> Self {
        GmJson {
            dim: gm.dim,
            components: gm
                .components
                .iter()
                .map(|c| ComponentJson {
                    weight: c.weight,
                    mean: c.mean.iter().copied().collect(),
                    cov: matrix_to_rows(&c.cov),
                })
                .collect(),
        }
    }
}
