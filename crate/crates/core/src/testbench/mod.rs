//! Test-space enumeration and suite execution.
//!
//! A [`TestSpec`] fixes one combination of error category filters, window
//! granularity and scope. Filters set to `None` mean "all". Suites run every
//! spec, then adjust the raw p-values of the whole suite jointly.

mod bench;
mod report;
mod summary;

use std::fmt;

use crate::classify::BitClass;
use crate::ingest::{Detection, Manufacturer, Technology, Topology, UeCause};
use crate::stats::{CorrelationResult, KsResult, TestStatus};
use crate::timegrid::{Granularity, Metric, Scope, ScopeKind};

pub use bench::{Feasibility, Rejection, Suite, SuiteOptions, Workbench};
pub use report::{spec_fields, write_suite_table, SUITE_HEADER};
pub use summary::{summarize, Band, Significant, SuiteSummary, HISTOGRAM_BINS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorClass {
    Ce,
    Ue,
    /// Scrubber-detected corruptions, classed by flipped bit count.
    Mb,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 3] = [ErrorClass::Ce, ErrorClass::Ue, ErrorClass::Mb];

    pub fn token(self) -> &'static str {
        match self {
            ErrorClass::Ce => "CE",
            ErrorClass::Ue => "UE",
            ErrorClass::Mb => "MB",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.token().eq_ignore_ascii_case(s))
    }

    /// Window granularities the class may be tested at.
    pub fn allows(self, g: Granularity) -> bool {
        !(self == ErrorClass::Mb && g == Granularity::Hour)
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Transience {
    Transient,
    NonTransient,
}

impl Transience {
    pub const ALL: [Transience; 2] = [Transience::Transient, Transience::NonTransient];

    pub fn token(self) -> &'static str {
        match self {
            Transience::Transient => "transient",
            Transience::NonTransient => "non_transient",
        }
    }

    pub fn matches(self, label: Option<bool>) -> bool {
        label == Some(self == Transience::Transient)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CellFilter {
    Single,
    Multi,
}

impl CellFilter {
    pub const ALL: [CellFilter; 2] = [CellFilter::Single, CellFilter::Multi];

    pub fn token(self) -> &'static str {
        match self {
            CellFilter::Single => "single",
            CellFilter::Multi => "multi",
        }
    }

    pub fn matches(self, single_cell: Option<bool>) -> bool {
        single_cell == Some(self == CellFilter::Single)
    }
}

/// One test of the exploration space. Field order is the sort order of
/// suite output.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TestSpec {
    pub error_class: ErrorClass,
    pub manufacturer: Option<Manufacturer>,
    pub technology: Option<Technology>,
    pub transience: Option<Transience>,
    pub detection: Option<Detection>,
    pub cell: Option<CellFilter>,
    /// Always set for CE, always `None` otherwise.
    pub metric: Option<Metric>,
    pub ue_cause: Option<UeCause>,
    pub bit_class: Option<BitClass>,
    pub window: Granularity,
    pub scope: Scope,
}

impl TestSpec {
    /// Whether every filter is legal for the error class.
    pub fn is_legal(&self) -> bool {
        let ce = self.error_class == ErrorClass::Ce;
        let ue = self.error_class == ErrorClass::Ue;
        let mb = self.error_class == ErrorClass::Mb;
        self.error_class.allows(self.window)
            && (ce || (self.transience.is_none() && self.detection.is_none() && self.cell.is_none()))
            && ce == self.metric.is_some()
            && (ue || self.ue_cause.is_none())
            && (mb || self.bit_class.is_none())
            && !(mb && (self.manufacturer.is_some() || self.technology.is_some()))
            && self.ue_cause.is_none_or(UeCause::is_error)
            && self.detection != Some(Detection::Unknown)
    }

    /// The spec with its scope replaced by the whole system.
    pub(crate) fn series_key(&self) -> TestSpec {
        TestSpec { scope: Scope::System, ..self.clone() }
    }
}

/// Which windows and scopes to enumerate.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumOptions {
    pub windows: Vec<Granularity>,
    pub scope_kinds: Vec<ScopeKind>,
}

impl EnumOptions {
    /// All windows legal for the class; scrubber tests default to the
    /// system scope, other classes to system, racks, nodes and sockets.
    pub fn defaults(class: ErrorClass) -> Self {
        let scope_kinds = match class {
            ErrorClass::Mb => vec![ScopeKind::System],
            _ => vec![ScopeKind::System, ScopeKind::Rack, ScopeKind::Node, ScopeKind::Socket],
        };
        Self { windows: Granularity::ALL.to_vec(), scope_kinds }
    }

    pub fn with_dimms(mut self) -> Self {
        if !self.scope_kinds.contains(&ScopeKind::Dimm) {
            self.scope_kinds.push(ScopeKind::Dimm);
        }
        self
    }

    fn windows_for(&self, class: ErrorClass) -> Vec<Granularity> {
        let mut w: Vec<Granularity> = self.windows.iter().copied().filter(|g| class.allows(*g)).collect();
        w.sort();
        w.dedup();
        w
    }

    /// Scrubber events carry no DIMM, so socket and DIMM scopes do not
    /// apply to them.
    fn kinds_for(&self, class: ErrorClass) -> Vec<ScopeKind> {
        self.scope_kinds
            .iter()
            .copied()
            .filter(|k| class != ErrorClass::Mb || matches!(k, ScopeKind::System | ScopeKind::Rack | ScopeKind::Node))
            .collect()
    }

    fn scopes(&self, class: ErrorClass, topology: &Topology) -> Vec<Scope> {
        let kinds = self.kinds_for(class);
        topology.scopes(kinds.contains(&ScopeKind::Dimm)).into_iter().filter(|s| kinds.contains(&s.kind())).collect()
    }
}

fn all<T: Copy>(values: &[T]) -> Vec<Option<T>> {
    std::iter::once(None).chain(values.iter().copied().map(Some)).collect()
}

/// Filter combinations of a class, without window and scope.
fn filter_combos(class: ErrorClass) -> Vec<TestSpec> {
    let base = TestSpec {
        error_class: class,
        manufacturer: None,
        technology: None,
        transience: None,
        detection: None,
        cell: None,
        metric: None,
        ue_cause: None,
        bit_class: None,
        window: Granularity::Day,
        scope: Scope::System,
    };
    let mut out = Vec::new();
    match class {
        ErrorClass::Ce => {
            for manufacturer in all(&Manufacturer::ALL) {
                for technology in all(&Technology::ALL) {
                    for transience in all(&Transience::ALL) {
                        for detection in all(&[Detection::MemoryRead, Detection::PatrolScrub]) {
                            for cell in all(&CellFilter::ALL) {
                                for metric in [Metric::EventCount, Metric::DimmCount] {
                                    out.push(TestSpec {
                                        manufacturer,
                                        technology,
                                        transience,
                                        detection,
                                        cell,
                                        metric: Some(metric),
                                        ..base.clone()
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        ErrorClass::Ue => {
            for manufacturer in all(&Manufacturer::ALL) {
                for technology in all(&Technology::ALL) {
                    for ue_cause in all(&[UeCause::UncorrectedEcc, UeCause::ScrubFailed]) {
                        out.push(TestSpec { manufacturer, technology, ue_cause, ..base.clone() });
                    }
                }
            }
        }
        ErrorClass::Mb => {
            for bit_class in all(&BitClass::ALL) {
                out.push(TestSpec { bit_class, ..base.clone() });
            }
        }
    }
    out
}

/// Number of specs [`spec_iter`] yields, in closed form.
pub fn spec_count(class: ErrorClass, topology: &Topology, options: &EnumOptions) -> u64 {
    let filters: u64 = match class {
        ErrorClass::Ce => 4 * 4 * 3 * 3 * 3 * 2,
        ErrorClass::Ue => 4 * 4 * 3,
        ErrorClass::Mb => 7,
    };
    let kinds = options.kinds_for(class);
    let scopes: u64 = kinds
        .iter()
        .map(|k| match k {
            ScopeKind::System => 1,
            ScopeKind::Rack => topology.rack_count(),
            ScopeKind::Node => topology.node_count(),
            ScopeKind::Socket => topology.socket_count(),
            ScopeKind::Dimm => topology.dimms().len(),
        } as u64)
        .sum();
    filters * options.windows_for(class).len() as u64 * scopes
}

/// Lazily enumerate the cartesian product of filters, windows and scopes.
pub fn spec_iter(class: ErrorClass, topology: &Topology, options: &EnumOptions) -> impl Iterator<Item = TestSpec> {
    let combos = filter_combos(class);
    let windows = options.windows_for(class);
    let scopes = options.scopes(class, topology);
    combos.into_iter().flat_map(move |c| {
        let scopes = scopes.clone();
        windows.clone().into_iter().flat_map(move |window| {
            let c = c.clone();
            scopes.clone().into_iter().map(move |scope| TestSpec { window, scope, ..c.clone() })
        })
    })
}

pub fn enumerate_specs(class: ErrorClass, topology: &Topology, options: &EnumOptions) -> Vec<TestSpec> {
    spec_iter(class, topology, options).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestKind {
    Kendall,
    Ks,
}

impl TestKind {
    pub fn token(self) -> &'static str {
        match self {
            TestKind::Kendall => "kendall",
            TestKind::Ks => "ks",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestResult {
    Kendall(CorrelationResult),
    Ks(KsResult),
}

impl TestResult {
    pub fn status(&self) -> TestStatus {
        match self {
            TestResult::Kendall(r) => r.status,
            TestResult::Ks(r) => r.status,
        }
    }

    /// tau-b or the KS distance.
    pub fn stat(&self) -> Option<f64> {
        match self {
            TestResult::Kendall(r) => r.tau_b,
            TestResult::Ks(r) => r.d_stat,
        }
    }

    pub fn p_raw(&self) -> Option<f64> {
        match self {
            TestResult::Kendall(r) => r.p_raw,
            TestResult::Ks(r) => r.p_raw,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            TestResult::Kendall(r) => r.n,
            TestResult::Ks(r) => r.n_high + r.n_rest,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub spec: TestSpec,
    pub kind: TestKind,
    /// Neutron percentile defining the high partition (KS only).
    pub percentile: Option<f64>,
    pub result: TestResult,
    /// Present exactly when the status is ok.
    pub p_adj: Option<f64>,
}
