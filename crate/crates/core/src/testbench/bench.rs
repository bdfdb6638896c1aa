use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;

use super::{ErrorClass, TestKind, TestOutcome, TestResult, TestSpec};
use crate::classify::{bit_class, label_all, CeLabels};
use crate::ingest::{Dataset, Manufacturer, NeutronSeries, NodeId, Technology};
use crate::stats::{by_adjust, kendall_tau_b, ks_two_sample, partition_by_threshold, percentile, KsResult};
use crate::timegrid::{
    event_scopes, exposure_per_window, make_windows, window_index, Granularity, Interval, Located, Metric,
    PairedSeries, Scope, ScopeKind, Window,
};

/// Why a spec was not tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rejection {
    /// No DIMM in the scope matches the manufacturer and technology filters.
    AbsentCombination,
    /// The aggregated error series takes a single value (including all
    /// zeros).
    ConstantSeries,
}

impl Rejection {
    pub fn token(self) -> &'static str {
        match self {
            Rejection::AbsentCombination => "absent_combination",
            Rejection::ConstantSeries => "constant_series",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    /// Drop windows without errors before testing.
    pub drop_zero_windows: bool,
    /// Drop the partial first and last windows.
    pub exclude_clipped: bool,
    /// Divide scrubber counts by scanned megabytes when exposure records
    /// exist.
    pub normalize_exposure: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { drop_zero_windows: false, exclude_clipped: false, normalize_exposure: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Feasibility {
    pub feasible: Vec<TestSpec>,
    pub rejected: Vec<(TestSpec, Rejection)>,
}

impl Feasibility {
    pub fn tally(&self) -> BTreeMap<Rejection, usize> {
        let mut t = BTreeMap::new();
        for (_, r) in &self.rejected {
            *t.entry(*r).or_default() += 1;
        }
        t
    }
}

/// Outcomes of one suite, sorted by spec, plus the specs rejected before
/// testing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Suite {
    pub outcomes: Vec<TestOutcome>,
    pub rejected: Vec<(TestSpec, Rejection)>,
}

struct Grid {
    windows: Vec<Window>,
    /// Mean neutron rate per window, `None` without samples.
    neutron: Vec<Option<f64>>,
}

/// Interned placement of one event.
struct Placed {
    scopes: Vec<u32>,
    unit: u32,
    weight: f64,
    /// Window index per granularity, in [`Granularity::ALL`] order.
    window: [Option<u32>; 4],
    /// Inventory attributes of the event's DIMM, when known.
    dimm: Option<(Manufacturer, Technology)>,
}

struct ClassEvents {
    placed: Vec<Placed>,
}

/// Precomputed state shared by every spec of a dataset: labels, windows,
/// neutron means and event placements.
pub struct Workbench<'a> {
    dataset: &'a Dataset,
    options: SuiteOptions,
    labels: Vec<CeLabels>,
    grids: [Grid; 4],
    scope_ids: HashMap<Scope, u32>,
    /// Manufacturer/technology combinations present per scope, as a
    /// 9-bit mask.
    presence: HashMap<u32, u16>,
    ce: ClassEvents,
    ue: ClassEvents,
    mb: ClassEvents,
}

const KINDS: [ScopeKind; 5] = [ScopeKind::System, ScopeKind::Rack, ScopeKind::Node, ScopeKind::Socket, ScopeKind::Dimm];

fn gran_index(g: Granularity) -> usize {
    Granularity::ALL.iter().position(|x| *x == g).expect("known granularity")
}

fn combo_bit(m: usize, t: usize) -> u16 {
    1 << (m * 3 + t)
}

impl<'a> Workbench<'a> {
    pub fn new(dataset: &'a Dataset, neutron: &NeutronSeries, interval: Interval, options: SuiteOptions) -> Self {
        let topo = &dataset.topology;
        let grids = Granularity::ALL.map(|g| {
            let windows: Vec<Window> =
                make_windows(interval, g).into_iter().filter(|w| !options.exclude_clipped || !w.is_clipped()).collect();
            let samples = neutron.samples();
            let neutron = windows
                .iter()
                .map(|w| {
                    let r = neutron.range(w.start, w.end);
                    (!r.is_empty()).then(|| samples[r.clone()].iter().map(|s| s.rate).sum::<f64>() / r.len() as f64)
                })
                .collect();
            Grid { windows, neutron }
        });
        let scope_ids: HashMap<Scope, u32> =
            topo.scopes(true).into_iter().enumerate().map(|(i, s)| (s, i as u32)).collect();
        let mut presence: HashMap<u32, u16> = HashMap::new();
        for d in topo.dimms() {
            let m = Manufacturer::ALL.iter().position(|x| *x == d.manufacturer).unwrap();
            let t = Technology::ALL.iter().position(|x| *x == d.technology).unwrap();
            let scopes = [
                Scope::System,
                Scope::Rack(d.rack.clone()),
                Scope::Node(d.node.clone()),
                Scope::Socket(d.node.clone(), d.socket.clone()),
                Scope::Dimm(d.dimm.clone()),
            ];
            for s in scopes {
                *presence.entry(scope_ids[&s]).or_default() |= combo_bit(m, t);
            }
        }
        let mut units: HashMap<String, u32> = HashMap::new();
        let ce = Self::place(&dataset.ce, dataset, &grids, &scope_ids, &mut units);
        let ue = Self::place(&dataset.ue, dataset, &grids, &scope_ids, &mut units);
        let mb = Self::place(&dataset.scrub, dataset, &grids, &scope_ids, &mut units);
        Self { dataset, options, labels: label_all(&dataset.ce, topo), grids, scope_ids, presence, ce, ue, mb }
    }

    fn place<T: Located>(
        events: &[T],
        dataset: &Dataset,
        grids: &[Grid; 4],
        scope_ids: &HashMap<Scope, u32>,
        units: &mut HashMap<String, u32>,
    ) -> ClassEvents {
        let mut buf = Vec::new();
        let placed = events
            .iter()
            .map(|e| {
                event_scopes(e, &dataset.topology, &KINDS, &mut buf);
                let next = units.len() as u32;
                let unit = *units.entry(e.unit().to_string()).or_insert(next);
                let dimm = e.dimm().and_then(|d| dataset.topology.dimm(d)).map(|r| (r.manufacturer, r.technology));
                Placed {
                    dimm,
                    scopes: buf.iter().filter_map(|s| scope_ids.get(s).copied()).collect(),
                    unit,
                    weight: e.weight() as f64,
                    window: std::array::from_fn(|g| window_index(&grids[g].windows, e.timestamp()).map(|i| i as u32)),
                }
            })
            .collect();
        ClassEvents { placed }
    }

    pub fn windows(&self, g: Granularity) -> &[Window] {
        &self.grids[gran_index(g)].windows
    }

    fn events(&self, class: ErrorClass) -> &ClassEvents {
        match class {
            ErrorClass::Ce => &self.ce,
            ErrorClass::Ue => &self.ue,
            ErrorClass::Mb => &self.mb,
        }
    }

    /// Whether event `i` of the spec's class passes its category filters.
    fn accepts(&self, spec: &TestSpec, i: usize, p: &Placed) -> bool {
        let mt = || {
            spec.manufacturer.is_none_or(|m| p.dimm.is_some_and(|r| r.0 == m))
                && spec.technology.is_none_or(|t| p.dimm.is_some_and(|r| r.1 == t))
        };
        match spec.error_class {
            ErrorClass::Ce => {
                let e = &self.dataset.ce[i];
                let l = &self.labels[i];
                mt() && spec.transience.is_none_or(|f| f.matches(l.transient))
                    && spec.detection.is_none_or(|d| d == e.detection)
                    && spec.cell.is_none_or(|c| c.matches(l.single_cell))
            }
            ErrorClass::Ue => {
                let e = &self.dataset.ue[i];
                e.cause.is_error() && mt() && spec.ue_cause.is_none_or(|c| c == e.cause)
            }
            ErrorClass::Mb => {
                let e = &self.dataset.scrub[i];
                spec.bit_class.is_none_or(|b| b == bit_class(e.bits_flipped))
            }
        }
    }

    fn present(&self, spec: &TestSpec, scope: u32) -> bool {
        if spec.error_class == ErrorClass::Mb {
            return true;
        }
        let mask = self.presence.get(&scope).copied().unwrap_or(0);
        let ms: Vec<usize> = match spec.manufacturer {
            Some(m) => vec![Manufacturer::ALL.iter().position(|x| *x == m).unwrap()],
            None => (0..3).collect(),
        };
        let ts: Vec<usize> = match spec.technology {
            Some(t) => vec![Technology::ALL.iter().position(|x| *x == t).unwrap()],
            None => (0..3).collect(),
        };
        ms.iter().any(|&m| ts.iter().any(|&t| mask & combo_bit(m, t) != 0))
    }

    /// Per-scope window values for one series key.
    fn aggregate_key(&self, key: &TestSpec, wanted: &[bool]) -> HashMap<u32, Vec<f64>> {
        let g = gran_index(key.window);
        let len = self.grids[g].windows.len();
        let mut values: HashMap<u32, Vec<f64>> = HashMap::new();
        let mut seen: HashSet<(u32, u32, u32)> = HashSet::new();
        let metric = key.metric.unwrap_or(Metric::EventCount);
        for (i, p) in self.events(key.error_class).placed.iter().enumerate() {
            let Some(w) = p.window[g] else { continue };
            if !self.accepts(key, i, p) {
                continue;
            }
            for &s in p.scopes.iter().filter(|&&s| wanted[s as usize]) {
                let add = match metric {
                    Metric::EventCount => p.weight,
                    Metric::DimmCount if seen.insert((s, w, p.unit)) => 1.0,
                    Metric::DimmCount => continue,
                };
                values.entry(s).or_insert_with(|| vec![0.0; len])[w as usize] += add;
            }
        }
        values
    }

    /// Scrubber exposure per window restricted to the nodes of a scope.
    fn exposure(&self, scope: &Scope, g: usize) -> Vec<f64> {
        let topo = &self.dataset.topology;
        let keep = |n: &NodeId| match scope {
            Scope::System => true,
            Scope::Rack(r) => topo.rack_of(n) == Some(r),
            Scope::Node(x) => x == n,
            _ => false,
        };
        exposure_per_window(self.dataset.exposure.iter().filter(|r| keep(&r.node)), &self.grids[g].windows)
    }

    /// Paired series of a spec given its raw window values, or the reason
    /// it cannot be tested.
    fn paired(&self, spec: &TestSpec, raw: Option<&Vec<f64>>) -> Result<PairedSeries, Rejection> {
        let g = gran_index(spec.window);
        let grid = &self.grids[g];
        let zeros;
        let raw = match raw {
            Some(v) => v,
            None => {
                zeros = vec![0.0; grid.windows.len()];
                &zeros
            }
        };
        let mut windows: Vec<usize> = (0..grid.windows.len()).collect();
        let mut values = raw.clone();
        if spec.error_class == ErrorClass::Mb && self.options.normalize_exposure && !self.dataset.exposure.is_empty() {
            let mb = self.exposure(&spec.scope, g);
            windows.retain(|&w| mb[w] > 0.0);
            values = windows.iter().map(|&w| raw[w] / mb[w]).collect();
        }
        if values.windows(2).all(|p| p[0] == p[1]) {
            return Err(Rejection::ConstantSeries);
        }
        let mut out = PairedSeries::default();
        for (&w, &v) in windows.iter().zip(&values) {
            if let Some(n) = grid.neutron[w] {
                if self.options.drop_zero_windows && v == 0.0 {
                    continue;
                }
                out.windows.push(grid.windows[w]);
                out.neutron.push(n);
                out.errors.push(v);
            }
        }
        Ok(out)
    }

    /// Evaluate `f` on every spec's paired series, index-aligned with
    /// `specs`. Specs sharing filters and window are aggregated together.
    fn evaluate<R: Send>(
        &self,
        specs: &[TestSpec],
        f: impl Fn(&TestSpec, Result<PairedSeries, Rejection>) -> R + Sync,
    ) -> Vec<R> {
        let mut groups: HashMap<TestSpec, Vec<usize>> = HashMap::new();
        for (i, s) in specs.iter().enumerate() {
            groups.entry(s.series_key()).or_default().push(i);
        }
        let mut groups: Vec<(TestSpec, Vec<usize>)> = groups.into_iter().collect();
        groups.sort_by_key(|(_, idx)| idx[0]);
        let done: Vec<Vec<(usize, R)>> = groups
            .par_iter()
            .map(|(key, idx)| {
                let scope_of = |i: usize| self.scope_ids.get(&specs[i].scope).copied();
                let mut wanted = vec![false; self.scope_ids.len()];
                let scopes: Vec<Option<u32>> =
                    idx.iter().map(|&i| scope_of(i).filter(|&s| self.present(key, s))).collect();
                for s in scopes.iter().flatten() {
                    wanted[*s as usize] = true;
                }
                let values = self.aggregate_key(key, &wanted);
                idx.iter()
                    .zip(&scopes)
                    .map(|(&i, scope)| {
                        let spec = &specs[i];
                        let series = match scope {
                            None => Err(Rejection::AbsentCombination),
                            Some(s) => self.paired(spec, values.get(s)),
                        };
                        (i, f(spec, series))
                    })
                    .collect()
            })
            .collect();
        let mut out: Vec<Option<R>> = (0..specs.len()).map(|_| None).collect();
        for (i, r) in done.into_iter().flatten() {
            out[i] = Some(r);
        }
        out.into_iter().map(|r| r.expect("every spec evaluated")).collect()
    }

    /// Aligned series of one spec, for inspection and plotting.
    pub fn paired_series(&self, spec: &TestSpec) -> Result<PairedSeries, Rejection> {
        self.evaluate(std::slice::from_ref(spec), |_, s| s).pop().expect("one spec")
    }

    pub fn feasibility_filter(&self, specs: &[TestSpec]) -> Feasibility {
        let verdicts = self.evaluate(specs, |_, s| s.err());
        let mut out = Feasibility::default();
        for (spec, v) in specs.iter().zip(verdicts) {
            match v {
                None => out.feasible.push(spec.clone()),
                Some(r) => out.rejected.push((spec.clone(), r)),
            }
        }
        out
    }

    /// Kendall tau-b of every spec against neutron rate, with a joint
    /// adjustment over the suite.
    pub fn run_kendall_suite(&self, specs: &[TestSpec]) -> Suite {
        let results = self.evaluate(specs, |spec, series| {
            series.map(|p| {
                let r = kendall_tau_b(&p.neutron, &p.errors).expect("aligned series have equal finite lengths");
                vec![TestOutcome {
                    spec: spec.clone(),
                    kind: TestKind::Kendall,
                    percentile: None,
                    result: TestResult::Kendall(r),
                    p_adj: None,
                }]
            })
        });
        finish(specs, results)
    }

    /// Two-sample KS tests of errors in windows above each neutron
    /// percentile against the remaining windows.
    pub fn run_ks_suite(&self, specs: &[TestSpec], percentiles: &[f64]) -> Suite {
        let results = self.evaluate(specs, |spec, series| {
            series.map(|p| {
                percentiles
                    .iter()
                    .map(|&q| TestOutcome {
                        spec: spec.clone(),
                        kind: TestKind::Ks,
                        percentile: Some(q),
                        result: TestResult::Ks(ks_at(&p, q)),
                        p_adj: None,
                    })
                    .collect()
            })
        });
        finish(specs, results)
    }
}

fn ks_at(p: &PairedSeries, q: f64) -> KsResult {
    let Ok(threshold) = percentile(&p.neutron, q) else {
        return KsResult::too_few(0, p.len());
    };
    let (high, rest) = partition_by_threshold(p, threshold);
    match ks_two_sample(&high, &rest) {
        Ok(r) => r,
        Err(_) => KsResult::too_few(high.len(), rest.len()),
    }
}

fn finish(specs: &[TestSpec], results: Vec<Result<Vec<TestOutcome>, Rejection>>) -> Suite {
    let mut suite = Suite::default();
    for (spec, r) in specs.iter().zip(results) {
        match r {
            Ok(o) => suite.outcomes.extend(o),
            Err(rej) => suite.rejected.push((spec.clone(), rej)),
        }
    }
    suite.outcomes.sort_by(|a, b| {
        a.spec.cmp(&b.spec).then_with(|| a.percentile.unwrap_or(0.0).total_cmp(&b.percentile.unwrap_or(0.0)))
    });
    suite.rejected.sort();
    adjust(&mut suite.outcomes);
    suite
}

/// Joint adjustment over every ok outcome.
pub(crate) fn adjust(outcomes: &mut [TestOutcome]) {
    let ok: Vec<usize> = (0..outcomes.len()).filter(|&i| outcomes[i].result.p_raw().is_some()).collect();
    let raw: Vec<f64> = ok.iter().map(|&i| outcomes[i].result.p_raw().unwrap()).collect();
    let adj = by_adjust(&raw).expect("raw p-values lie in [0, 1]");
    for (&i, p) in ok.iter().zip(adj.p_adj) {
        outcomes[i].p_adj = Some(p);
    }
}
