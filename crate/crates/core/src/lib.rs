//! Toolkit for deciding whether cosmic-ray intensity, as measured by ground
//! neutron monitors, influences DRAM error rates in large systems.
//!
//! The crate is organised as a pipeline:
//!
//! - [`ingest`] parses neutron logs, error logs and the DIMM inventory.
//! - [`classify`] derives transience, cell-multiplicity and category labels.
//! - [`timegrid`] windows and aggregates events and aligns them with neutron
//!   counts.
//! - [`stats`] holds the statistical kernel (Kendall tau-b, two-sample
//!   Kolmogorov-Smirnov, Benjamini-Yekutieli, percentiles).
//! - [`testbench`] enumerates and runs whole suites of tests.
//! - [`mlpredict`] trains random-forest error predictors with and without
//!   neutron features.
//! - [`synth`] generates seeded synthetic datasets with known ground truth.

pub mod classify;
pub mod ingest;
pub mod mlpredict;
pub mod stats;
pub mod synth;
pub mod testbench;
pub mod timegrid;

mod rng;

pub use chrono::{DateTime, Utc};

/// UTC instant with second resolution.
pub type Timestamp = DateTime<Utc>;
