use std::fmt;

use super::{Dataset, DimmId, NodeId};
use crate::timegrid::Interval;
use crate::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FindingKind {
    /// Event names a DIMM missing from the inventory. Retained, but skipped
    /// by category-filtered tests.
    UnknownDimm,
    /// Event node is missing from the inventory.
    UnknownNode,
    /// DIMM exists but the inventory places it on a different node.
    NodeMismatch,
    /// Timestamp falls outside the declared observation interval.
    OutsideInterval,
}

impl FindingKind {
    pub fn token(self) -> &'static str {
        match self {
            FindingKind::UnknownDimm => "unknown_dimm",
            FindingKind::UnknownNode => "unknown_node",
            FindingKind::NodeMismatch => "node_mismatch",
            FindingKind::OutsideInterval => "outside_interval",
        }
    }
}

/// One problem found while cross-checking logs against the inventory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub severity: Severity,
    pub kind: FindingKind,
    /// Input family: `ce`, `ue`, `scrub` or `exposure`.
    pub source: &'static str,
    /// Zero-based record index within that family.
    pub index: usize,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev} {} {}[{}]: {}", self.kind.token(), self.source, self.index, self.message)
    }
}

struct Checker<'a> {
    dataset: &'a Dataset,
    interval: Option<&'a Interval>,
    out: Vec<Finding>,
}

impl Checker<'_> {
    fn push(&mut self, severity: Severity, kind: FindingKind, source: &'static str, index: usize, message: String) {
        self.out.push(Finding { severity, kind, source, index, message });
    }

    fn time(&mut self, source: &'static str, index: usize, t: Timestamp) {
        if let Some(iv) = self.interval {
            if !iv.contains(t) {
                self.push(
                    Severity::Warning,
                    FindingKind::OutsideInterval,
                    source,
                    index,
                    format!("timestamp {t} outside observation interval"),
                );
            }
        }
    }

    fn node(&mut self, source: &'static str, index: usize, node: &NodeId) {
        let topo = &self.dataset.topology;
        if !topo.is_empty() && !topo.contains_node(node) {
            self.push(
                Severity::Warning,
                FindingKind::UnknownNode,
                source,
                index,
                format!("node `{node}` not in inventory"),
            );
        }
    }

    fn dimm(&mut self, source: &'static str, index: usize, node: &NodeId, dimm: &DimmId) {
        match self.dataset.topology.dimm(dimm) {
            None => {
                self.push(
                    Severity::Warning,
                    FindingKind::UnknownDimm,
                    source,
                    index,
                    format!("DIMM `{dimm}` not in inventory"),
                );
                self.node(source, index, node);
            }
            Some(rec) if rec.node != *node => self.push(
                Severity::Error,
                FindingKind::NodeMismatch,
                source,
                index,
                format!("DIMM `{dimm}` logged on node `{node}` but inventory places it on `{}`", rec.node),
            ),
            Some(_) => {}
        }
    }
}

/// Cross-check events against the inventory and the observation interval.
/// Never modifies the dataset.
pub fn validate_dataset(dataset: &Dataset, interval: Option<&Interval>) -> Vec<Finding> {
    let mut c = Checker { dataset, interval, out: Vec::new() };
    for (i, e) in dataset.ce.iter().enumerate() {
        c.dimm("ce", i, &e.node, &e.dimm);
        c.time("ce", i, e.timestamp);
    }
    for (i, e) in dataset.ue.iter().enumerate() {
        c.dimm("ue", i, &e.node, &e.dimm);
        c.time("ue", i, e.timestamp);
    }
    for (i, e) in dataset.scrub.iter().enumerate() {
        c.node("scrub", i, &e.node);
        c.time("scrub", i, e.timestamp);
    }
    for (i, r) in dataset.exposure.iter().enumerate() {
        c.node("exposure", i, &r.node);
        if let Some(iv) = interval {
            if r.interval_end <= iv.start || r.interval_start >= iv.end {
                c.push(
                    Severity::Warning,
                    FindingKind::OutsideInterval,
                    "exposure",
                    i,
                    "exposure record outside observation interval".to_string(),
                );
            }
        }
    }
    c.out
}
