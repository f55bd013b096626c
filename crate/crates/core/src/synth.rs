//! Seeded synthetic mixtures for experiments and tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::gaussmix::GaussianMixture;
use crate::rng::substream;

/// A random `dim`-dimensional mixture with `g` components.
///
/// Weights are bounded away from zero, means spread over `[-3, 3]` per
/// coordinate, covariances are `AAᵀ + 0.05 I` with Gaussian `A`.
pub fn random_gm(seed: u64, dim: usize, g: usize) -> GaussianMixture {
    let mut rng = substream(seed, 0x5EED);
    let raw: Vec<f64> = (0..g).map(|_| 0.2 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let parts = raw
        .iter()
        .map(|w| {
            let mean = DVector::from_fn(dim, |_, _| rng.random_range(-3.0..3.0));
            let a = DMatrix::from_fn(dim, dim, |_, _| 0.7 * rng.sample::<f64, _>(StandardNormal));
            let cov = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.05;
            (w / total, mean, cov)
        })
        .collect();
    GaussianMixture::from_parts(parts).expect("synthetic mixture is valid")
}

/// Two well-separated equal-variance scalar modes with unequal weights.
pub fn bimodal_1d() -> GaussianMixture {
    GaussianMixture::scalar(&[(0.7, -2.0, 0.25), (0.3, 3.0, 0.5)]).expect("valid")
}
