//! Input parsing and the shared data model.
//!
//! Every input is line-oriented comma-separated text with a mandatory header
//! row. Lines starting with `#` are comments. Timestamps are ISO-8601 / RFC
//! 3339 and may carry any offset; they are normalised to UTC at parse time
//! and truncated to whole seconds.

mod parse;
mod topology;
mod validate;
mod write;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::Timestamp;

pub use parse::{
    parse_ce_log, parse_exposure_log, parse_job_log, parse_neutron_log, parse_scrub_log, parse_ue_log, NeutronMeta,
};
pub use topology::{load_inventory, Topology};
pub use validate::{validate_dataset, Finding, FindingKind, Severity};
pub use write::{
    format_timestamp, write_ce_log, write_exposure_log, write_inventory, write_job_log, write_neutron_log,
    write_scrub_log, write_ue_log,
};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(id: impl AsRef<str>) -> Self {
                Self(Arc::from(id.as_ref()))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({:?})", stringify!($name), &*self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self::new(s)
            }
        }
    };
}

id_type!(
    /// Compute node identifier.
    NodeId
);
id_type!(
    /// DIMM identifier, unique across the inventory.
    DimmId
);
id_type!(
    /// Socket identifier, local to its node.
    SocketId
);
id_type!(
    /// Rack identifier.
    RackId
);

/// Errors raised while reading any input file.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: timestamp does not increase strictly")]
    NonMonotonicTimestamp { line: u64 },
    #[error("line {line}: header mismatch, expected `{expected}`, found `{found}`")]
    BadHeader { line: u64, expected: String, found: String },
    #[error("missing header row (expected `{expected}`)")]
    MissingHeader { expected: String },
    #[error("line {line}: duplicate DIMM `{dimm}`")]
    DuplicateDimm { line: u64, dimm: String },
    #[error("line {line}: inconsistent containment: {reason}")]
    InconsistentContainment { line: u64, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl IngestError {
    pub(crate) fn malformed(line: u64, reason: impl Into<String>) -> Self {
        IngestError::MalformedRow { line, reason: reason.into() }
    }
}

/// One neutron-monitor reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeutronSample {
    pub timestamp: Timestamp,
    /// Counts per second.
    pub rate: f64,
    /// Pressure and efficiency corrected.
    pub corrected: bool,
}

/// Time-ordered neutron counts from one monitor.
#[derive(Debug, Clone, PartialEq)]
pub struct NeutronSeries {
    pub monitor_id: String,
    samples: Vec<NeutronSample>,
}

impl NeutronSeries {
    /// Build a series, checking that timestamps increase strictly, rates are
    /// finite and non-negative, and the corrected flag is uniform.
    pub fn new(monitor_id: impl Into<String>, samples: Vec<NeutronSample>) -> Result<Self, IngestError> {
        for (i, pair) in samples.windows(2).enumerate() {
            if pair[1].timestamp <= pair[0].timestamp {
                return Err(IngestError::NonMonotonicTimestamp { line: i as u64 + 2 });
            }
            if pair[1].corrected != pair[0].corrected {
                return Err(IngestError::malformed(i as u64 + 2, "mixed corrected flags"));
            }
        }
        if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| !s.rate.is_finite() || s.rate < 0.0) {
            return Err(IngestError::malformed(i as u64 + 1, format!("invalid rate {}", s.rate)));
        }
        Ok(Self { monitor_id: monitor_id.into(), samples })
    }

    pub fn samples(&self) -> &[NeutronSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.rate)
    }

    /// Index range of samples with `start <= timestamp < end`.
    pub fn range(&self, start: Timestamp, end: Timestamp) -> std::ops::Range<usize> {
        let lo = self.samples.partition_point(|s| s.timestamp < start);
        let hi = self.samples.partition_point(|s| s.timestamp < end);
        lo..hi.max(lo)
    }
}

/// Path by which a corrected error was detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Detection {
    MemoryRead,
    PatrolScrub,
    Unknown,
}

impl Detection {
    pub fn token(self) -> &'static str {
        match self {
            Detection::MemoryRead => "read",
            Detection::PatrolScrub => "scrub",
            Detection::Unknown => "unknown",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        match s {
            "read" => Some(Detection::MemoryRead),
            "scrub" => Some(Detection::PatrolScrub),
            "unknown" => Some(Detection::Unknown),
            _ => None,
        }
    }
}

/// Physical address of an error inside a DIMM. Any part may be unlogged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CellLocation {
    pub rank: Option<u32>,
    pub bank: Option<u32>,
    pub row: Option<u32>,
    pub column: Option<u32>,
}

impl CellLocation {
    pub fn full(rank: u32, bank: u32, row: u32, column: u32) -> Self {
        Self { rank: Some(rank), bank: Some(bank), row: Some(row), column: Some(column) }
    }

    /// Row or column present without rank and bank.
    pub fn is_consistent(&self) -> bool {
        !(self.row.is_some() || self.column.is_some()) || (self.rank.is_some() && self.bank.is_some())
    }

    /// `(rank, bank, row, column)` when every part is known.
    pub fn cell(&self) -> Option<(u32, u32, u32, u32)> {
        Some((self.rank?, self.bank?, self.row?, self.column?))
    }
}

/// One corrected-error log record.
///
/// `multiplicity` counts how many errors the record stands for; location
/// detail describes at most one of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectedErrorEvent {
    pub timestamp: Timestamp,
    pub node: NodeId,
    pub dimm: DimmId,
    pub location: CellLocation,
    pub detection: Detection,
    pub multiplicity: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UeCause {
    UncorrectedEcc,
    ScrubFailed,
    UeWarning,
}

impl UeCause {
    pub fn token(self) -> &'static str {
        match self {
            UeCause::UncorrectedEcc => "uncorrected_ecc",
            UeCause::ScrubFailed => "scrub_failed",
            UeCause::UeWarning => "ue_warning",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        match s {
            "uncorrected_ecc" => Some(UeCause::UncorrectedEcc),
            "scrub_failed" => Some(UeCause::ScrubFailed),
            "ue_warning" => Some(UeCause::UeWarning),
            _ => None,
        }
    }

    /// Warnings precede failures but are not uncorrected errors themselves.
    pub fn is_error(self) -> bool {
        !matches!(self, UeCause::UeWarning)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UncorrectedErrorEvent {
    pub timestamp: Timestamp,
    pub node: NodeId,
    pub dimm: DimmId,
    pub cause: UeCause,
}

/// Memory corruption found by a software scrubber.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScrubberErrorEvent {
    pub timestamp: Timestamp,
    pub node: NodeId,
    pub address: u64,
    pub bits_flipped: u32,
}

/// Amount of memory a scrubber traversed on one node during an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanExposureRecord {
    pub interval_start: Timestamp,
    pub interval_end: Timestamp,
    pub node: NodeId,
    pub mb_scanned: f64,
}

/// One job allocation, used by the cost-benefit model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobRecord {
    pub node: NodeId,
    pub start: Timestamp,
    pub end: Timestamp,
}

impl JobRecord {
    pub fn node_hours(&self) -> f64 {
        (self.end - self.start).num_seconds() as f64 / 3600.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Manufacturer {
    A,
    B,
    C,
}

impl Manufacturer {
    pub const ALL: [Manufacturer; 3] = [Manufacturer::A, Manufacturer::B, Manufacturer::C];

    pub fn token(self) -> &'static str {
        match self {
            Manufacturer::A => "A",
            Manufacturer::B => "B",
            Manufacturer::C => "C",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        match s {
            "A" => Some(Manufacturer::A),
            "B" => Some(Manufacturer::B),
            "C" => Some(Manufacturer::C),
            _ => None,
        }
    }
}

/// DRAM process node, anonymised to its leading digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Technology {
    T3x,
    T2y,
    T2z,
}

impl Technology {
    pub const ALL: [Technology; 3] = [Technology::T3x, Technology::T2y, Technology::T2z];

    pub fn token(self) -> &'static str {
        match self {
            Technology::T3x => "3x",
            Technology::T2y => "2y",
            Technology::T2z => "2z",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        match s {
            "3x" => Some(Technology::T3x),
            "2y" => Some(Technology::T2y),
            "2z" => Some(Technology::T2z),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimmRecord {
    pub dimm: DimmId,
    pub node: NodeId,
    pub socket: SocketId,
    pub rack: RackId,
    pub manufacturer: Manufacturer,
    pub technology: Technology,
    pub capacity_mb: u64,
}

/// Everything the analyses consume apart from the neutron series.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub topology: Topology,
    pub ce: Vec<CorrectedErrorEvent>,
    pub ue: Vec<UncorrectedErrorEvent>,
    pub scrub: Vec<ScrubberErrorEvent>,
    pub exposure: Vec<ScanExposureRecord>,
}
