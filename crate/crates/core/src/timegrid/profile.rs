use std::collections::{BTreeMap, HashSet};

use chrono::{Duration, Timelike};
use thiserror::Error;

use super::{Located, PairedSeries};

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("exclusion fraction must be in [0, 1), got {0}")]
    BadFraction(f64),
    #[error("histogram needs at least one bin per axis")]
    NoBins,
}

/// Total error weight per hour of day, after shifting timestamps by
/// `utc_offset_hours`.
pub fn hour_of_day_profile<T: Located>(events: &[T], utc_offset_hours: i32) -> [u64; 24] {
    let mut bins = [0u64; 24];
    let shift = Duration::hours(utc_offset_hours as i64);
    for e in events {
        bins[(e.timestamp() + shift).hour() as usize] += e.weight();
    }
    bins
}

/// Result of removing the most error-prone units.
#[derive(Debug, Clone)]
pub struct Exclusion<T> {
    pub kept: Vec<T>,
    /// Removed units, most errors first.
    pub excluded: Vec<String>,
}

/// Drop the `ceil(fraction * units)` units with the highest total error
/// weight. Ties go to the lower unit id.
pub fn exclude_top_dimms<T: Located + Clone>(events: &[T], fraction: f64) -> Result<Exclusion<T>, ProfileError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(ProfileError::BadFraction(fraction));
    }
    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    for e in events {
        *totals.entry(e.unit()).or_default() += e.weight();
    }
    let n_drop = (fraction * totals.len() as f64).ceil() as usize;
    let mut ranked: Vec<(&str, u64)> = totals.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let excluded: Vec<String> = ranked.iter().take(n_drop).map(|(u, _)| u.to_string()).collect();
    let drop: HashSet<&str> = excluded.iter().map(String::as_str).collect();
    let kept = events.iter().filter(|e| !drop.contains(e.unit())).cloned().collect();
    Ok(Exclusion { kept, excluded })
}

/// Observation counts on a neutron × error grid. `counts[y][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub x_edges: Vec<f64>,
    /// Edges in the binned coordinate: `log10(1 + errors)` when `y_log`.
    pub y_edges: Vec<f64>,
    pub y_log: bool,
    pub counts: Vec<Vec<u64>>,
}

fn edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
}

fn bin_of(v: f64, edges: &[f64]) -> usize {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    let i = ((v - lo) / (hi - lo) * bins as f64).floor();
    (i.max(0.0) as usize).min(bins - 1)
}

/// 2-D histogram of paired windows: neutron mean on x, errors on y.
pub fn heatmap_bins(paired: &PairedSeries, x_bins: usize, y_bins: usize, y_log: bool) -> Result<Heatmap, ProfileError> {
    if x_bins == 0 || y_bins == 0 {
        return Err(ProfileError::NoBins);
    }
    let ys: Vec<f64> = paired.errors.iter().map(|&e| if y_log { (1.0 + e).log10() } else { e }).collect();
    let range = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let (xl, xh) = if paired.is_empty() { (0.0, 1.0) } else { range(&paired.neutron) };
    let (yl, yh) = if paired.is_empty() { (0.0, 1.0) } else { range(&ys) };
    let x_edges = edges(xl, xh, x_bins);
    let y_edges = edges(yl, yh, y_bins);
    let mut counts = vec![vec![0u64; x_bins]; y_bins];
    for (&x, &y) in paired.neutron.iter().zip(&ys) {
        counts[bin_of(y, &y_edges)][bin_of(x, &x_edges)] += 1;
    }
    Ok(Heatmap { x_edges, y_edges, y_log, counts })
}
