use std::collections::{HashMap, HashSet};

use super::{window_index, CountSeries, PairedSeries, Scope, ScopeKind, Window};
use crate::ingest::{
    CorrectedErrorEvent, DimmId, NeutronSeries, NodeId, ScanExposureRecord, ScrubberErrorEvent, Topology,
    UncorrectedErrorEvent,
};
use crate::Timestamp;

/// An error record that can be placed in time and in the machine.
pub trait Located {
    fn timestamp(&self) -> Timestamp;
    /// Number of errors the record stands for.
    fn weight(&self) -> u64;
    fn node(&self) -> &NodeId;
    fn dimm(&self) -> Option<&DimmId>;

    /// Unit used for distinct counting and top-N exclusion: the DIMM when
    /// the record names one, otherwise the node.
    fn unit(&self) -> &str {
        match self.dimm() {
            Some(d) => d.as_str(),
            None => self.node().as_str(),
        }
    }
}

impl Located for CorrectedErrorEvent {
    fn timestamp(&self) -> Timestamp {
        self.timestamp
    }
    fn weight(&self) -> u64 {
        self.multiplicity as u64
    }
    fn node(&self) -> &NodeId {
        &self.node
    }
    fn dimm(&self) -> Option<&DimmId> {
        Some(&self.dimm)
    }
}

impl Located for UncorrectedErrorEvent {
    fn timestamp(&self) -> Timestamp {
        self.timestamp
    }
    fn weight(&self) -> u64 {
        1
    }
    fn node(&self) -> &NodeId {
        &self.node
    }
    fn dimm(&self) -> Option<&DimmId> {
        Some(&self.dimm)
    }
}

impl Located for ScrubberErrorEvent {
    fn timestamp(&self) -> Timestamp {
        self.timestamp
    }
    fn weight(&self) -> u64 {
        1
    }
    fn node(&self) -> &NodeId {
        &self.node
    }
    fn dimm(&self) -> Option<&DimmId> {
        None
    }
}

impl<T: Located> Located for &T {
    fn timestamp(&self) -> Timestamp {
        (**self).timestamp()
    }
    fn weight(&self) -> u64 {
        (**self).weight()
    }
    fn node(&self) -> &NodeId {
        (**self).node()
    }
    fn dimm(&self) -> Option<&DimmId> {
        (**self).dimm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    /// Sum of event multiplicities.
    EventCount,
    /// Distinct DIMMs with at least one matching event.
    DimmCount,
}

impl Metric {
    pub fn token(self) -> &'static str {
        match self {
            Metric::EventCount => "event_count",
            Metric::DimmCount => "dimm_count",
        }
    }
}

/// Scopes an event contributes to, restricted to `kinds`.
pub fn event_scopes<T: Located>(e: &T, topo: &Topology, kinds: &[ScopeKind], out: &mut Vec<Scope>) {
    out.clear();
    for kind in kinds {
        match kind {
            ScopeKind::System => out.push(Scope::System),
            ScopeKind::Rack => {
                if let Some(r) = topo.rack_of(e.node()) {
                    out.push(Scope::Rack(r.clone()));
                }
            }
            ScopeKind::Node => out.push(Scope::Node(e.node().clone())),
            ScopeKind::Socket => {
                if let Some(rec) = e.dimm().and_then(|d| topo.dimm(d)) {
                    if rec.node == *e.node() {
                        out.push(Scope::Socket(rec.node.clone(), rec.socket.clone()));
                    }
                }
            }
            ScopeKind::Dimm => {
                if let Some(d) = e.dimm() {
                    out.push(Scope::Dimm(d.clone()));
                }
            }
        }
    }
}

fn in_scope<T: Located>(e: &T, topo: &Topology, scope: &Scope) -> bool {
    let mut tmp = Vec::with_capacity(1);
    event_scopes(e, topo, &[scope.kind()], &mut tmp);
    tmp.first() == Some(scope)
}

/// Metric value per window over events inside `scope` accepted by `filter`.
///
/// `filter` receives each event's index in `events`.
pub fn aggregate<T: Located>(
    events: &[T],
    topology: &Topology,
    windows: &[Window],
    scope: &Scope,
    filter: impl Fn(usize, &T) -> bool,
    metric: Metric,
) -> CountSeries {
    let mut out = CountSeries::zeros(windows);
    let mut seen: Vec<HashSet<&str>> = vec![HashSet::new(); windows.len()];
    for (i, e) in events.iter().enumerate() {
        if !filter(i, e) || !in_scope(e, topology, scope) {
            continue;
        }
        let Some(w) = window_index(windows, e.timestamp()) else {
            continue;
        };
        match metric {
            Metric::EventCount => out.values[w] += e.weight() as f64,
            Metric::DimmCount => {
                if seen[w].insert(e.unit()) {
                    out.values[w] += 1.0;
                }
            }
        }
    }
    out
}

/// [`aggregate`] for every scope of the given kinds in one pass. Scopes
/// without matching events are absent from the map (their series is all
/// zeros).
pub fn aggregate_by_scope<T: Located>(
    events: &[T],
    topology: &Topology,
    windows: &[Window],
    kinds: &[ScopeKind],
    filter: impl Fn(usize, &T) -> bool,
    metric: Metric,
) -> HashMap<Scope, Vec<f64>> {
    let mut values: HashMap<Scope, Vec<f64>> = HashMap::new();
    let mut seen: HashSet<(usize, Scope, &str)> = HashSet::new();
    let mut scopes = Vec::new();
    for (i, e) in events.iter().enumerate() {
        if !filter(i, e) {
            continue;
        }
        let Some(w) = window_index(windows, e.timestamp()) else {
            continue;
        };
        event_scopes(e, topology, kinds, &mut scopes);
        for scope in scopes.drain(..) {
            let add = match metric {
                Metric::EventCount => e.weight() as f64,
                Metric::DimmCount => {
                    if seen.insert((w, scope.clone(), e.unit())) {
                        1.0
                    } else {
                        continue;
                    }
                }
            };
            values.entry(scope).or_insert_with(|| vec![0.0; windows.len()])[w] += add;
        }
    }
    values
}

/// Pair each window's error value with its mean neutron rate. Windows
/// without neutron samples are dropped.
pub fn align(neutron: &NeutronSeries, counts: &CountSeries) -> PairedSeries {
    let mut out = PairedSeries::default();
    let samples = neutron.samples();
    for (w, &v) in counts.windows.iter().zip(&counts.values) {
        let r = neutron.range(w.start, w.end);
        if r.is_empty() {
            continue;
        }
        let n = r.len() as f64;
        let mean = samples[r].iter().map(|s| s.rate).sum::<f64>() / n;
        out.windows.push(*w);
        out.neutron.push(mean);
        out.errors.push(v);
    }
    out
}

/// Scanned megabytes per window; records partially overlapping a window
/// contribute in proportion to the overlap.
pub fn exposure_per_window<'a>(
    exposure: impl IntoIterator<Item = &'a ScanExposureRecord>,
    windows: &[Window],
) -> Vec<f64> {
    let mut mb = vec![0.0; windows.len()];
    for r in exposure {
        let span = (r.interval_end - r.interval_start).num_seconds() as f64;
        let first = windows.partition_point(|w| w.end <= r.interval_start);
        for (i, w) in windows.iter().enumerate().skip(first) {
            if w.start >= r.interval_end {
                break;
            }
            let lo = w.start.max(r.interval_start);
            let hi = w.end.min(r.interval_end);
            let overlap = (hi - lo).num_seconds() as f64;
            if overlap > 0.0 {
                mb[i] += r.mb_scanned * overlap / span;
            }
        }
    }
    mb
}

/// Errors per scanned megabyte, plus the windows dropped for having no
/// exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub series: CountSeries,
    pub dropped: Vec<Window>,
}

pub fn normalize_by_exposure<'a>(
    counts: &CountSeries,
    exposure: impl IntoIterator<Item = &'a ScanExposureRecord>,
) -> Normalized {
    let mb = exposure_per_window(exposure, &counts.windows);
    let mut series = CountSeries { windows: Vec::new(), values: Vec::new() };
    let mut dropped = Vec::new();
    for ((w, &v), &m) in counts.windows.iter().zip(&counts.values).zip(&mb) {
        if m > 0.0 {
            series.windows.push(*w);
            series.values.push(v / m);
        } else {
            dropped.push(*w);
        }
    }
    Normalized { series, dropped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{load_inventory, CellLocation, Detection, NeutronSample, NodeId, RackId};
    use crate::timegrid::{make_windows, Granularity, Interval};
    use proptest::prelude::*;

    fn ts(s: &str) -> Timestamp {
        s.parse().unwrap()
    }

    fn ce(t: &str, node: &str, dimm: &str, m: u32) -> CorrectedErrorEvent {
        CorrectedErrorEvent {
            timestamp: ts(t),
            node: NodeId::new(node),
            dimm: DimmId::new(dimm),
            location: CellLocation::default(),
            detection: Detection::MemoryRead,
            multiplicity: m,
        }
    }

    fn day() -> Vec<Window> {
        make_windows(Interval::new(ts("2015-01-01T00:00:00Z"), ts("2015-01-03T00:00:00Z")), Granularity::Day)
    }

    fn topo() -> Topology {
        load_inventory(
            "dimm,node,socket,rack,manufacturer,technology,capacity_mb\n\
             d1,n1,0,r1,A,3x,4096\nd2,n1,1,r1,A,3x,4096\nd3,n2,0,r2,B,2y,4096\n"
                .as_bytes(),
        )
        .unwrap()
    }

    #[test]
    fn event_count_sums_multiplicity() {
        let ev = vec![
            ce("2015-01-01T01:00:00Z", "n1", "d1", 1),
            ce("2015-01-01T02:00:00Z", "n1", "d1", 2),
            ce("2015-01-01T03:00:00Z", "n1", "d2", 4),
        ];
        let s = aggregate(&ev, &topo(), &day(), &Scope::System, |_, _| true, Metric::EventCount);
        assert_eq!(s.values, [7.0, 0.0]);
        let d = aggregate(&ev, &topo(), &day(), &Scope::System, |_, _| true, Metric::DimmCount);
        assert_eq!(d.values, [2.0, 0.0]);
    }

    #[test]
    fn no_matching_events_is_all_zero() {
        let ev = vec![ce("2015-01-01T01:00:00Z", "n1", "d1", 1)];
        let s = aggregate(&ev, &topo(), &day(), &Scope::System, |_, _| false, Metric::EventCount);
        assert_eq!(s.values, [0.0, 0.0]);
        assert!(s.is_constant());
    }

    #[test]
    fn socket_scope_uses_inventory() {
        let ev = vec![ce("2015-01-01T01:00:00Z", "n1", "d1", 1), ce("2015-01-02T01:00:00Z", "n1", "d2", 1)];
        let sock = Scope::Socket(NodeId::new("n1"), crate::ingest::SocketId::new("1"));
        let s = aggregate(&ev, &topo(), &day(), &sock, |_, _| true, Metric::EventCount);
        assert_eq!(s.values, [0.0, 1.0]);
        let bulk = aggregate_by_scope(
            &ev,
            &topo(),
            &day(),
            &[ScopeKind::Socket, ScopeKind::Rack],
            |_, _| true,
            Metric::EventCount,
        );
        assert_eq!(bulk[&sock], s.values);
        assert_eq!(bulk[&Scope::Rack(RackId::new("r1"))], [1.0, 1.0]);
        assert!(!bulk.contains_key(&Scope::Rack(RackId::new("r2"))));
    }

    #[test]
    fn align_drops_uncovered_windows() {
        let neutron = NeutronSeries::new(
            "m",
            vec![
                NeutronSample { timestamp: ts("2015-01-01T00:00:00Z"), rate: 70.0, corrected: true },
                NeutronSample { timestamp: ts("2015-01-01T12:00:00Z"), rate: 72.0, corrected: true },
            ],
        )
        .unwrap();
        let counts = CountSeries { windows: day(), values: vec![3.0, 4.0] };
        let p = align(&neutron, &counts);
        assert_eq!(p.len(), 1);
        assert_eq!(p.neutron, [71.0]);
        assert_eq!(p.errors, [3.0]);
    }

    fn exposure(start: &str, end: &str, mb: f64) -> ScanExposureRecord {
        ScanExposureRecord { interval_start: ts(start), interval_end: ts(end), node: NodeId::new("n1"), mb_scanned: mb }
    }

    #[test]
    fn normalization_cases() {
        let w = day();
        let counts = CountSeries { windows: w.clone(), values: vec![10.0, 0.0] };
        let exp = [
            exposure("2015-01-01T00:00:00Z", "2015-01-01T06:00:00Z", 5.0),
            exposure("2015-01-02T00:00:00Z", "2015-01-02T06:00:00Z", 5.0),
        ];
        let n = normalize_by_exposure(&counts, &exp);
        assert_eq!(n.series.values, [2.0, 0.0]);
        assert!(n.dropped.is_empty());

        let n = normalize_by_exposure(&counts, &exp[1..]);
        assert_eq!(n.series.values, [0.0]);
        assert_eq!(n.dropped, [w[0]]);
    }

    #[test]
    fn partial_overlap_splits_proportionally() {
        let w = day();
        let exp = [exposure("2015-01-01T18:00:00Z", "2015-01-02T06:00:00Z", 12.0)];
        assert_eq!(exposure_per_window(&exp, &w), [6.0, 6.0]);
    }

    fn arb_events() -> impl Strategy<Value = Vec<CorrectedErrorEvent>> {
        prop::collection::vec((0i64..(3 * 86400), 0usize..4, 1u32..5), 0..60).prop_map(|v| {
            let ids = ["d1", "d2", "d3", "d1"];
            let nodes = ["n1", "n1", "n2", "n1"];
            v.into_iter()
                .map(|(secs, k, m)| CorrectedErrorEvent {
                    timestamp: ts("2014-12-31T12:00:00Z") + chrono::Duration::seconds(secs),
                    node: NodeId::new(nodes[k]),
                    dimm: DimmId::new(ids[k]),
                    location: CellLocation::default(),
                    detection: Detection::MemoryRead,
                    multiplicity: m,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn conservation_and_rack_additivity(ev in arb_events()) {
            let w = day();
            let t = topo();
            let sys = aggregate(&ev, &t, &w, &Scope::System, |_, _| true, Metric::EventCount);
            let inside: u64 = ev.iter().filter(|e| window_index(&w, e.timestamp).is_some()).map(|e| e.multiplicity as u64).sum();
            prop_assert_eq!(sys.total(), inside as f64);
            let mut racks = vec![0.0; w.len()];
            for r in t.racks() {
                let s = aggregate(&ev, &t, &w, &Scope::Rack(r.clone()), |_, _| true, Metric::EventCount);
                for (a, b) in racks.iter_mut().zip(&s.values) { *a += b; }
            }
            prop_assert_eq!(racks, sys.values.clone());
            let mut nodes = vec![0.0; w.len()];
            for n in t.nodes_in_rack(&RackId::new("r1")) {
                let s = aggregate(&ev, &t, &w, &Scope::Node(n.clone()), |_, _| true, Metric::EventCount);
                for (a, b) in nodes.iter_mut().zip(&s.values) { *a += b; }
            }
            let r1 = aggregate(&ev, &t, &w, &Scope::Rack(RackId::new("r1")), |_, _| true, Metric::EventCount);
            prop_assert_eq!(nodes, r1.values);
        }

        #[test]
        fn exposure_scaling_is_homogeneous(k in 0.1f64..100.0, mb in 1.0f64..1000.0, errs in 0u32..50) {
            let w = day();
            let counts = CountSeries { windows: w.clone(), values: vec![errs as f64, 1.0] };
            let base = [exposure("2015-01-01T00:00:00Z", "2015-01-03T00:00:00Z", mb)];
            let scaled = [exposure("2015-01-01T00:00:00Z", "2015-01-03T00:00:00Z", mb * k)];
            let a = normalize_by_exposure(&counts, &base).series.values;
            let b = normalize_by_exposure(&counts, &scaled).series.values;
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x / k - y).abs() <= 1e-9 * x.abs().max(1e-12));
            }
        }
    }
}
