use std::collections::BTreeMap;

use super::{TestKind, TestOutcome};

pub const HISTOGRAM_BINS: usize = 20;

/// Correlation strength of a significant Kendall outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Low,
    /// `|tau| >= 0.5`.
    ModerateHigh,
}

impl Band {
    pub fn token(self) -> &'static str {
        match self {
            Band::Low => "low",
            Band::ModerateHigh => "moderate/high",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Significant {
    /// Index into the summarized outcomes.
    pub index: usize,
    pub stat: f64,
    pub p_adj: f64,
    /// Kendall outcomes only.
    pub band: Option<Band>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSummary {
    pub total: usize,
    /// Statistics of ok outcomes in ascending order.
    pub sorted_stats: Vec<f64>,
    /// Number of leading negative entries of `sorted_stats`.
    pub negative: usize,
    pub raw_histogram: [u64; HISTOGRAM_BINS],
    pub adjusted_histogram: [u64; HISTOGRAM_BINS],
    pub status_tally: BTreeMap<&'static str, usize>,
    pub alpha: f64,
    pub significant: Vec<Significant>,
}

fn bin(p: f64) -> usize {
    ((p * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
}

pub fn summarize(outcomes: &[TestOutcome], alpha: f64) -> SuiteSummary {
    let mut s = SuiteSummary {
        total: outcomes.len(),
        sorted_stats: Vec::new(),
        negative: 0,
        raw_histogram: [0; HISTOGRAM_BINS],
        adjusted_histogram: [0; HISTOGRAM_BINS],
        status_tally: BTreeMap::new(),
        alpha,
        significant: Vec::new(),
    };
    for (i, o) in outcomes.iter().enumerate() {
        *s.status_tally.entry(o.result.status().token()).or_default() += 1;
        if let Some(stat) = o.result.stat() {
            s.sorted_stats.push(stat);
        }
        if let Some(p) = o.result.p_raw() {
            s.raw_histogram[bin(p)] += 1;
        }
        if let Some(p) = o.p_adj {
            s.adjusted_histogram[bin(p)] += 1;
            if p < alpha {
                let stat = o.result.stat().unwrap_or(f64::NAN);
                s.significant.push(Significant {
                    index: i,
                    stat,
                    p_adj: p,
                    band: (o.kind == TestKind::Kendall).then(|| {
                        if stat.abs() >= 0.5 {
                            Band::ModerateHigh
                        } else {
                            Band::Low
                        }
                    }),
                });
            }
        }
    }
    s.sorted_stats.sort_by(f64::total_cmp);
    s.negative = s.sorted_stats.partition_point(|&x| x < 0.0);
    s
}
