//! Exact distributions of normalized-deviation-squared (NDS) statistics for
//! Gaussian mixtures, and NDS consistency tests for Gaussian-mixture filters.
//!
//! The NDS statistic of a Gaussian mixture against its own mean and
//! covariance follows a mixture of generalized chi-square laws; sums over
//! independent mixtures follow the super-index product mixture. This crate
//! derives those laws ([`nds`]), evaluates them ([`genchi2`]), tests observed
//! statistics against them ([`hypotest`]) and drives the whole thing from a
//! linear Gaussian-mixture filter ([`gmfilter`]).

// negated float comparisons are used on purpose to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gaussmix;
pub mod genchi2;
pub mod gmfilter;
pub mod harness;
pub mod hypotest;
mod linalg;
pub mod nds;
pub mod rng;
pub mod special;
pub mod synth;

pub use error::{Error, Result};
pub use gaussmix::{GaussianComponent, GaussianMixture};
pub use genchi2::{GenChi2, GenChi2Mixture, IndependentSum};

#[cfg(test)]
pub(crate) mod testutil {
    pub use crate::synth::random_gm;
}
