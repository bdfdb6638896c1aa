//! Statistical kernel shared by every suite.

mod fdr;
mod kendall;
mod ks;
mod percentile;

use thiserror::Error;

pub use fdr::{by_adjust, harmonic, AdjustedPValues};
pub use kendall::{kendall_tau_b, CorrelationResult, PairCounts};
pub use ks::{kolmogorov_pvalue, ks_two_sample, KsResult};
pub use percentile::{partition_by_threshold, percentile};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("series lengths differ ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("sample is empty")]
    EmptySample,
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("percentile must be in [0, 100], got {0}")]
    BadPercentile(f64),
    #[error("p-value outside [0, 1]: {0}")]
    InvalidPValue(f64),
}

/// Why a test produced, or did not produce, a statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TestStatus {
    Ok,
    /// One variable takes a single value, so it cannot be ranked.
    UntestableConstant,
    /// Too few observations for a meaningful statistic.
    TooFewPoints,
}

impl TestStatus {
    pub fn token(self) -> &'static str {
        match self {
            TestStatus::Ok => "ok",
            TestStatus::UntestableConstant => "untestable_constant",
            TestStatus::TooFewPoints => "too_few_points",
        }
    }
}

fn check_finite(v: &[f64]) -> Result<(), StatsError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}
