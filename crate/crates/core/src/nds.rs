//! Laws of NDS statistics.
//!
//! For `x ~ N(μ, Σ)` and a reference `(μ̄, Σ̄)`, the statistic
//! `q(x) = (x − μ̄)ᵀ Σ̄⁻¹ (x − μ̄)` is generalized chi-square. For `x` drawn
//! from a Gaussian mixture, the reference is the mixture's own mean and
//! covariance and the law is a gen-χ² mixture. Sums over independent
//! mixtures follow the super-index product mixture.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussmix::GaussianMixture;
use crate::genchi2::{coeffs_equal, GenChi2, GenChi2Mixture, IndependentSum};
use crate::linalg::{check_symmetric, cholesky_lower, solve_lower, symmetrize};

/// Largest super-index count expanded without truncation.
pub const MAX_EXPANDED: f64 = 1e7;

/// `q(x) = xᵀ A x + q1ᵀ x + q0` for a reference mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadFormCoeffs {
    pub a: DMatrix<f64>,
    pub q1: DVector<f64>,
    pub q0: f64,
}

impl QuadFormCoeffs {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.a * x)[(0, 0)] + self.q1.dot(x) + self.q0
    }
}

pub fn quad_form_coeffs(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<QuadFormCoeffs> {
    check_pair(mean, cov)?;
    let l = cholesky_lower(cov, "reference covariance")?;
    let n = mean.len();
    let linv = l.solve_lower_triangular(&DMatrix::identity(n, n)).expect("cholesky factor has a positive diagonal");
    let a = symmetrize(&(linv.transpose() * &linv));
    let am = &a * mean;
    Ok(QuadFormCoeffs { q1: -2.0 * &am, q0: mean.dot(&am), a })
}

/// `(x − mean)ᵀ cov⁻¹ (x − mean)` through a triangular solve.
pub fn nds_statistic(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    check_pair(mean, cov)?;
    if x.len() != mean.len() {
        return Err(Error::DimensionMismatch { expected: mean.len(), got: x.len(), context: "nds point" });
    }
    let l = cholesky_lower(cov, "reference covariance")?;
    Ok(solve_lower(&l, &(x - mean)).norm_squared())
}

/// NDS statistic of `x` against a mixture's own mean and covariance.
pub fn gm_nds_statistic(x: &DVector<f64>, gm: &GaussianMixture) -> Result<f64> {
    let (mean, cov) = gm.moments()?;
    nds_statistic(x, &mean, &cov)
}

/// Which square root `S` (`cov = S Sᵀ`) the Gaussian derivation uses.
///
/// The resulting law does not depend on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SquareRoot {
    #[default]
    Cholesky,
    Symmetric,
}

/// Law of `(x − ref_mean)ᵀ ref_cov⁻¹ (x − ref_mean)` for `x ~ N(mean, cov)`.
pub fn gaussian_nds_dist(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    ref_mean: &DVector<f64>,
    ref_cov: &DMatrix<f64>,
) -> Result<GenChi2> {
    gaussian_nds_dist_with(mean, cov, ref_mean, ref_cov, SquareRoot::Cholesky)
}

pub fn gaussian_nds_dist_with(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    ref_mean: &DVector<f64>,
    ref_cov: &DMatrix<f64>,
    root: SquareRoot,
) -> Result<GenChi2> {
    check_pair(mean, cov)?;
    check_pair(ref_mean, ref_cov)?;
    if mean.len() != ref_mean.len() {
        return Err(Error::DimensionMismatch {
            expected: ref_mean.len(),
            got: mean.len(),
            context: "component vs reference",
        });
    }
    let s = match root {
        SquareRoot::Cholesky => cholesky_lower(cov, "component covariance")?,
        SquareRoot::Symmetric => symmetric_root(cov)?,
    };
    let l = cholesky_lower(ref_cov, "reference covariance")?;
    // With ref_cov = L Lᵀ and M = L⁻¹ S: Sᵀ A S = Mᵀ M, and
    // Sᵀ (2Aμ + q1) = 2 Mᵀ L⁻¹ (μ − μ_ref).
    let m = l.solve_lower_triangular(&s).expect("cholesky factor has a positive diagonal");
    let delta = solve_lower(&l, &(mean - ref_mean));
    let q_mean = delta.norm_squared();
    let eig = SymmetricEigen::new(symmetrize(&(m.transpose() * &m)));
    let half_b = eig.eigenvectors.transpose() * (m.transpose() * &delta);

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut groups: Vec<(f64, u32, f64)> = Vec::new();
    let mut prev = f64::NAN;
    for i in order {
        let d = eig.eigenvalues[i];
        if !(d > 0.0) {
            return Err(Error::DegenerateCovariance("transformed form is not positive definite".into()));
        }
        let hb2 = half_b[i] * half_b[i];
        match groups.last_mut() {
            Some((sum_d, k, sum_hb2)) if coeffs_equal(prev, d) => {
                *sum_d += d;
                *k += 1;
                *sum_hb2 += hb2;
            }
            _ => groups.push((d, 1, hb2)),
        }
        prev = d;
    }
    let mut w = Vec::with_capacity(groups.len());
    let mut k = Vec::with_capacity(groups.len());
    let mut lambda = Vec::with_capacity(groups.len());
    for (sum_d, kj, sum_hb2) in groups {
        let wj = sum_d / kj as f64;
        w.push(wj);
        k.push(kj);
        lambda.push(sum_hb2 / (wj * wj));
    }
    let t = q_mean - w.iter().zip(&lambda).map(|(a, b)| a * b).sum::<f64>();
    GenChi2::new(w, k, lambda, t)
}

/// Law of a mixture's NDS statistic against its own moments, one component
/// per mixture component in the original order.
pub fn gm_nds_dist(gm: &GaussianMixture) -> Result<GenChi2Mixture> {
    let (mean, cov) = gm.moments()?;
    let comps = gm
        .components()
        .iter()
        .map(|c| gaussian_nds_dist(c.mean(), c.cov(), &mean, &cov))
        .collect::<Result<Vec<_>>>()?;
    GenChi2Mixture::new(gm.components().iter().map(|c| c.weight()).collect(), comps)
}

/// Expanded law of a sum of independent NDS statistics.
#[derive(Debug, Clone, Serialize)]
pub struct SumNdsDist {
    pub mixture: GenChi2Mixture,
    /// Super-index weight dropped by truncation, 0 when exact.
    pub truncation_mass: f64,
    /// Whether retained weights were rescaled to sum to one.
    pub renormalized: bool,
    /// Number of super-index realizations before truncation.
    pub full_count: f64,
}

/// Law of `Σ_c q_c(x_c)` for independent `x_c` drawn from `gms[c]`.
///
/// With `top_g` set, only the `top_g` heaviest super-index components are
/// kept and their weights renormalized. Components are emitted in
/// lexicographic super-index order.
pub fn sum_nds_dist(gms: &[GaussianMixture], top_g: Option<usize>) -> Result<SumNdsDist> {
    let parts = per_term_laws(gms)?;
    let full_count: f64 = parts.iter().map(|p| p.len() as f64).product();
    let keep = match top_g {
        Some(0) => return Err(Error::invalid("top_g must be at least 1")),
        Some(g) if (g as f64) < full_count => Some(g),
        _ => None,
    };
    let tuples = match keep {
        None => {
            if full_count > MAX_EXPANDED {
                return Err(Error::TooManyComponents { count: full_count, limit: MAX_EXPANDED });
            }
            all_tuples(&parts)
        }
        Some(g) => {
            if g as f64 > MAX_EXPANDED {
                return Err(Error::TooManyComponents { count: g as f64, limit: MAX_EXPANDED });
            }
            heaviest_tuples(&parts, g)
        }
    };
    let mut weights = Vec::with_capacity(tuples.len());
    let mut comps = Vec::with_capacity(tuples.len());
    for tuple in &tuples {
        let mut weight = 1.0;
        let mut t = 0.0;
        let mut terms = Vec::new();
        for (part, &idx) in parts.iter().zip(tuple) {
            weight *= part.weights()[idx];
            let g = &part.components()[idx];
            t += g.t();
            terms.extend(g.w().iter().zip(g.k()).zip(g.lambda()).map(|((w, k), l)| (*w, *k, *l)));
        }
        weights.push(weight);
        comps.push(GenChi2::merged(terms, t)?);
    }
    let retained: f64 = weights.iter().sum();
    let (mixture, truncation_mass) = if keep.is_some() {
        (GenChi2Mixture::renormalized(weights, comps)?, (1.0 - retained).max(0.0))
    } else {
        (GenChi2Mixture::new(weights, comps)?, 0.0)
    };
    Ok(SumNdsDist { mixture, truncation_mass, renormalized: keep.is_some(), full_count })
}

/// Exact law of `Σ_c q_c(x_c)` in factored form, with no expansion.
pub fn sum_nds_law(gms: &[GaussianMixture]) -> Result<IndependentSum> {
    IndependentSum::new(per_term_laws(gms)?)
}

fn per_term_laws(gms: &[GaussianMixture]) -> Result<Vec<GenChi2Mixture>> {
    if gms.is_empty() {
        return Err(Error::invalid("need at least one mixture"));
    }
    gms.iter().map(gm_nds_dist).collect()
}

fn all_tuples(parts: &[GenChi2Mixture]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; parts.len()];
    loop {
        out.push(idx.clone());
        let mut c = parts.len();
        loop {
            if c == 0 {
                return out;
            }
            c -= 1;
            idx[c] += 1;
            if idx[c] < parts[c].len() {
                break;
            }
            idx[c] = 0;
        }
    }
}

#[derive(PartialEq)]
struct Candidate {
    log_weight: f64,
    ranks: Vec<usize>,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.log_weight.total_cmp(&other.log_weight).then_with(|| other.ranks.cmp(&self.ranks))
    }
}

/// The `count` heaviest super-index tuples, by best-first search over the
/// per-term weights sorted in decreasing order. Returned in lexicographic
/// order of the original indices.
fn heaviest_tuples(parts: &[GenChi2Mixture], count: usize) -> Vec<Vec<usize>> {
    let sorted: Vec<Vec<usize>> = parts
        .iter()
        .map(|p| {
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&a, &b| p.weights()[b].total_cmp(&p.weights()[a]).then(a.cmp(&b)));
            order
        })
        .collect();
    let log_w = |ranks: &[usize]| -> f64 {
        ranks.iter().enumerate().map(|(c, &r)| parts[c].weights()[sorted[c][r]].ln()).sum()
    };
    let start = vec![0usize; parts.len()];
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    heap.push(Candidate { log_weight: log_w(&start), ranks: start.clone() });
    seen.insert(start);
    let mut out = Vec::with_capacity(count);
    while let Some(Candidate { ranks, .. }) = heap.pop() {
        for c in 0..ranks.len() {
            if ranks[c] + 1 < parts[c].len() {
                let mut next = ranks.clone();
                next[c] += 1;
                if seen.insert(next.clone()) {
                    heap.push(Candidate { log_weight: log_w(&next), ranks: next });
                }
            }
        }
        out.push(ranks.iter().enumerate().map(|(c, &r)| sorted[c][r]).collect::<Vec<_>>());
        if out.len() == count {
            break;
        }
    }
    out.sort();
    out
}

fn check_pair(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<()> {
    if mean.is_empty() {
        return Err(Error::invalid("dimension must be positive"));
    }
    check_symmetric(cov, "covariance")?;
    if cov.nrows() != mean.len() {
        return Err(Error::DimensionMismatch { expected: mean.len(), got: cov.nrows(), context: "covariance" });
    }
    Ok(())
}

fn symmetric_root(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(cov));
    if eig.eigenvalues.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::DegenerateCovariance("component covariance".into()));
    }
    let sqrt_d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * sqrt_d * eig.eigenvectors.transpose())
}
