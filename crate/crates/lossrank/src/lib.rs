//! Model selection by loss rank.
//!
//! The loss rank of a model is the probability that a resampled dataset
//! fits it at least as well as the actual data; picking the model with the
//! smallest loss rank trades fit against flexibility without an explicit
//! penalty term. This crate implements that idea in three settings, plus
//! the baselines it is usually compared against:
//!
//! - [`intervals`] — binary classification over dyadic piecewise-constant
//!   classifiers, with Rademacher label relabeling defining the rank and a
//!   Rademacher-complexity criterion as the baseline;
//! - [`cluster`] — choosing the number of clusters, with the bootstrap
//!   defining the rank and Calinski-Harabasz as the baseline;
//! - [`loglinear`] — structure selection for graphical log-linear models,
//!   with the multinomial bootstrap defining the rank and BIC as the
//!   baseline, and [`ga`] providing a genetic search when the model space
//!   is too large to enumerate.
//!
//! Everything is driven by explicit [`resample::SeedSpec`] streams, so runs
//! reproduce bit-identically at any degree of parallelism. A narrative
//! guide with runnable examples lives in [`guide`]; the same chapters build
//! with mdbook from the repository's `book/` directory.

pub mod cluster;
pub mod error;
pub mod ga;
pub mod guide;
pub mod intervals;
pub mod loglinear;
pub mod resample;

pub use error::{Error, Result};
pub use resample::SeedSpec;

/// A Monte Carlo loss-rank estimate: out of `resamples` fictitious
/// datasets, `hits` fitted the model at least as well as the actual data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossRankEstimate {
    hits: u32,
    resamples: u32,
}

impl LossRankEstimate {
    pub fn new(hits: u32, resamples: u32) -> Self {
        assert!(resamples > 0 && hits <= resamples);
        LossRankEstimate { hits, resamples }
    }

    /// The estimated rank, `hits / resamples`, always in [0, 1].
    pub fn value(&self) -> f64 {
        self.hits as f64 / self.resamples as f64
    }

    pub fn hits(&self) -> u32 {
        self.hits
    }

    pub fn resamples(&self) -> u32 {
        self.resamples
    }
}

impl std::fmt::Display for LossRankEstimate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{} = {:.4}", self.hits, self.resamples, self.value())
    }
}
