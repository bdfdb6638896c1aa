use std::collections::{HashMap, HashSet};

use chrono::Duration;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::ingest::{CorrectedErrorEvent, Dataset, DimmId, NeutronSeries, UeCause};
use crate::rng::{stream, stream_id};
use crate::timegrid::Interval;
use crate::Timestamp;

pub const ERROR_HISTORY: &str = "error_history";
pub const NEUTRON: &str = "neutron";

const UNDERSAMPLE_STREAM: u32 = 30;
const PERMUTE_STREAM: u32 = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// An uncorrected error on the DIMM within the next day.
    UeNextDay,
    /// A corrected error on the DIMM within the next hour.
    CeNextHour,
}

impl Target {
    pub fn horizon(self) -> Duration {
        match self {
            Target::UeNextDay => Duration::days(1),
            Target::CeNextHour => Duration::hours(1),
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Target::UeNextDay => "ue",
            Target::CeNextHour => "ce",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ue" => Some(Target::UeNextDay),
            "ce" => Some(Target::CeNextHour),
            _ => None,
        }
    }
}

/// Trailing spans of the neutron features.
pub const NEUTRON_SPANS: [(&str, i64); 6] =
    [("1h", 3600), ("5h", 5 * 3600), ("10h", 10 * 3600), ("1d", 86_400), ("1w", 7 * 86_400), ("1m", 30 * 86_400)];

/// Trailing spans of the windowed error counts.
const COUNT_SPANS: [(&str, i64); 3] = [("1h", 3600), ("1d", 86_400), ("1w", 7 * 86_400)];

/// Feature matrix with one row per (tick, DIMM), in chronological order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub feature_names: Vec<String>,
    /// Group of every feature column.
    pub groups: Vec<&'static str>,
    /// Row-major, `rows() * n_features()` values.
    pub x: Vec<f64>,
    pub labels: Vec<bool>,
    pub ticks: Vec<Timestamp>,
    pub dimms: Vec<DimmId>,
}

impl LabeledDataset {
    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Rows at the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> LabeledDataset {
        let mut x = Vec::with_capacity(idx.len() * self.n_features());
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        LabeledDataset {
            feature_names: self.feature_names.clone(),
            groups: self.groups.clone(),
            x,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ticks: idx.iter().map(|&i| self.ticks[i]).collect(),
            dimms: idx.iter().map(|&i| self.dimms[i].clone()).collect(),
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &LabeledDataset) -> LabeledDataset {
        let mut out = self.clone();
        out.x.extend_from_slice(&other.x);
        out.labels.extend_from_slice(&other.labels);
        out.ticks.extend_from_slice(&other.ticks);
        out.dimms.extend_from_slice(&other.dimms);
        out
    }

    pub fn columns_of(&self, group: &str) -> Vec<usize> {
        (0..self.n_features()).filter(|&j| self.groups[j] == group).collect()
    }
}

fn feature_layout() -> (Vec<String>, Vec<&'static str>) {
    let mut names = Vec::new();
    for class in ["ce", "ue", "ue_warning"] {
        names.push(format!("{class}_total"));
        for (s, _) in COUNT_SPANS {
            names.push(format!("{class}_{s}"));
        }
    }
    for what in ["ranks", "banks", "rows", "columns"] {
        names.push(format!("distinct_{what}"));
    }
    let history = names.len();
    for (s, _) in NEUTRON_SPANS {
        for stat in ["mean", "std", "pct_var"] {
            names.push(format!("neutron_{stat}_{s}"));
        }
    }
    let groups = (0..names.len()).map(|j| if j < history { ERROR_HISTORY } else { NEUTRON }).collect();
    (names, groups)
}

/// Mean, population standard deviation and `(last - first) / first` of
/// the neutron rate over `(t - span, t]`. All zero without samples.
pub fn neutron_stats(neutron: &NeutronSeries, t: Timestamp, span: Duration) -> [f64; 3] {
    let s = neutron.samples();
    let lo = s.partition_point(|x| x.timestamp <= t - span);
    let hi = s.partition_point(|x| x.timestamp <= t);
    if lo >= hi {
        return [0.0; 3];
    }
    let rates: Vec<f64> = s[lo..hi].iter().map(|x| x.rate).collect();
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let (min, max) = rates.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
    let std = if min == max { 0.0 } else { (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt() };
    let first = rates[0];
    let pct = if first == 0.0 { 0.0 } else { (rates[rates.len() - 1] - first) / first };
    [mean, std, pct]
}

/// Number of timestamps in `sorted` that are `<= t`.
fn upto(sorted: &[Timestamp], t: Timestamp) -> f64 {
    sorted.partition_point(|&x| x <= t) as f64
}

#[derive(Default)]
struct History<'a> {
    ce: Vec<&'a CorrectedErrorEvent>,
    ce_times: Vec<Timestamp>,
    ue: Vec<Timestamp>,
    warnings: Vec<Timestamp>,
}

/// Ticks `start + k * tick` whose label horizon ends inside the interval.
pub fn ticks(interval: Interval, tick: Duration, target: Target) -> Vec<Timestamp> {
    let mut out = Vec::new();
    let mut t = interval.start;
    while t + target.horizon() <= interval.end {
        out.push(t);
        t += tick;
    }
    out
}

/// One feature vector per (DIMM in the inventory, tick). Features at tick
/// `t` use only records with timestamps `<= t`; the label looks at
/// `(t, t + horizon]`.
pub fn build_dataset(
    dataset: &Dataset,
    neutron: &NeutronSeries,
    target: Target,
    interval: Interval,
    tick: Duration,
) -> LabeledDataset {
    let (feature_names, groups) = feature_layout();
    let p = feature_names.len();
    let ticks = ticks(interval, tick, target);
    let dimms: Vec<&DimmId> = dataset.topology.dimms().iter().map(|d| &d.dimm).collect();
    let index: HashMap<&DimmId, usize> = dimms.iter().enumerate().map(|(i, d)| (*d, i)).collect();

    let mut hist: Vec<History> = dimms.iter().map(|_| History::default()).collect();
    let mut ce: Vec<&CorrectedErrorEvent> = dataset.ce.iter().collect();
    ce.sort_by_key(|e| e.timestamp);
    for e in ce {
        if let Some(&i) = index.get(&e.dimm) {
            hist[i].ce.push(e);
            hist[i].ce_times.push(e.timestamp);
        }
    }
    for e in &dataset.ue {
        if let Some(&i) = index.get(&e.dimm) {
            match e.cause {
                UeCause::UeWarning => hist[i].warnings.push(e.timestamp),
                _ => hist[i].ue.push(e.timestamp),
            }
        }
    }
    for h in &mut hist {
        h.ue.sort();
        h.warnings.sort();
    }

    let neutron_rows: Vec<Vec<f64>> = ticks
        .par_iter()
        .map(|&t| {
            NEUTRON_SPANS.iter().flat_map(|&(_, secs)| neutron_stats(neutron, t, Duration::seconds(secs))).collect()
        })
        .collect();

    // Per DIMM: history features and labels for every tick.
    let per_dimm: Vec<(Vec<f64>, Vec<bool>)> = hist
        .par_iter()
        .map(|h| {
            let mut feats = Vec::with_capacity(ticks.len() * (p - 18));
            let mut labels = Vec::with_capacity(ticks.len());
            let mut ranks = HashSet::new();
            let mut banks = HashSet::new();
            let mut rows = HashSet::new();
            let mut cols = HashSet::new();
            let mut next = 0;
            for &t in &ticks {
                while next < h.ce.len() && h.ce[next].timestamp <= t {
                    let l = &h.ce[next].location;
                    if let Some(r) = l.rank {
                        ranks.insert(r);
                        if let Some(b) = l.bank {
                            banks.insert((r, b));
                            if let Some(row) = l.row {
                                rows.insert((r, b, row));
                            }
                            if let Some(c) = l.column {
                                cols.insert((r, b, c));
                            }
                        }
                    }
                    next += 1;
                }
                for times in [&h.ce_times, &h.ue, &h.warnings] {
                    let total = upto(times, t);
                    feats.push(total);
                    for (_, secs) in COUNT_SPANS {
                        feats.push(total - upto(times, t - Duration::seconds(secs)));
                    }
                }
                feats.extend([ranks.len(), banks.len(), rows.len(), cols.len()].map(|n| n as f64));
                let future = match target {
                    Target::UeNextDay => &h.ue,
                    Target::CeNextHour => &h.ce_times,
                };
                labels.push(upto(future, t + target.horizon()) > upto(future, t));
            }
            (feats, labels)
        })
        .collect();

    let history = p - 18;
    let n = ticks.len() * dimms.len();
    let mut out = LabeledDataset {
        feature_names,
        groups,
        x: Vec::with_capacity(n * p),
        labels: Vec::with_capacity(n),
        ticks: Vec::with_capacity(n),
        dimms: Vec::with_capacity(n),
    };
    for (k, &t) in ticks.iter().enumerate() {
        for (i, (feats, labels)) in per_dimm.iter().enumerate() {
            out.x.extend_from_slice(&feats[k * history..(k + 1) * history]);
            out.x.extend_from_slice(&neutron_rows[k]);
            out.labels.push(labels[k]);
            out.ticks.push(t);
            out.dimms.push(dimms[i].clone());
        }
    }
    out
}

/// 60/20/20 split at tick boundaries, without shuffling.
pub fn split_chronological(data: &LabeledDataset) -> (LabeledDataset, LabeledDataset, LabeledDataset) {
    let mut distinct: Vec<Timestamp> = data.ticks.clone();
    distinct.dedup();
    let n = distinct.len();
    let a = n * 6 / 10;
    let b = n * 8 / 10;
    let bound = |k: usize| distinct.get(k).copied();
    let part = |lo: Option<Timestamp>, hi: Option<Timestamp>| {
        let idx: Vec<usize> = (0..data.rows())
            .filter(|&i| lo.is_none_or(|l| data.ticks[i] >= l) && hi.is_none_or(|h| data.ticks[i] < h))
            .collect();
        data.select(&idx)
    };
    let (ta, tb) = (bound(a), bound(b));
    let train = part(None, ta);
    let val = match ta {
        Some(_) => part(ta, tb),
        None => data.select(&[]),
    };
    let test = match tb {
        Some(_) => part(tb, None),
        None => data.select(&[]),
    };
    (train, val, test)
}

/// Keep every positive and at most `ratio` negatives per positive, drawn
/// without replacement. Row order is preserved.
pub fn undersample_majority(train: &LabeledDataset, ratio: f64, seed: u64) -> LabeledDataset {
    let pos: Vec<usize> = (0..train.rows()).filter(|&i| train.labels[i]).collect();
    let neg: Vec<usize> = (0..train.rows()).filter(|&i| !train.labels[i]).collect();
    let want = ((pos.len() as f64 * ratio).round() as usize).min(neg.len());
    let mut rng = stream(seed, stream_id(UNDERSAMPLE_STREAM, 0));
    let mut keep: Vec<usize> = sample(&mut rng, neg.len(), want).into_iter().map(|k| neg[k]).collect();
    keep.extend(pos);
    keep.sort_unstable();
    train.select(&keep)
}

/// Apply one random row permutation to all columns of `group` jointly.
pub fn permute_group(data: &LabeledDataset, group: &str, seed: u64) -> LabeledDataset {
    let cols = data.columns_of(group);
    let mut perm: Vec<usize> = (0..data.rows()).collect();
    perm.shuffle(&mut stream(seed, stream_id(PERMUTE_STREAM, 0)));
    let mut out = data.clone();
    let p = data.n_features();
    for (dst, &src) in perm.iter().enumerate() {
        for &j in &cols {
            out.x[dst * p + j] = data.x[src * p + j];
        }
    }
    out
}
