//! Calendar windowing of error events and alignment with neutron counts.

mod aggregate;
mod profile;

use std::fmt;

use chrono::{Datelike, Duration, NaiveDate, TimeZone, Timelike, Utc};

use crate::ingest::{DimmId, NodeId, RackId, SocketId};
use crate::Timestamp;

pub use aggregate::{
    aggregate, aggregate_by_scope, align, event_scopes, exposure_per_window, normalize_by_exposure, Located, Metric,
    Normalized,
};
pub use profile::{exclude_top_dimms, heatmap_bins, hour_of_day_profile, Exclusion, Heatmap, ProfileError};

/// Half-open observation interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Interval {
    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t < self.end
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn duration(&self) -> Duration {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Granularity {
    Hour,
    Day,
    Week,
    Month,
}

impl Granularity {
    pub const ALL: [Granularity; 4] = [Granularity::Hour, Granularity::Day, Granularity::Week, Granularity::Month];

    pub fn token(self) -> &'static str {
        match self {
            Granularity::Hour => "hour",
            Granularity::Day => "day",
            Granularity::Week => "week",
            Granularity::Month => "month",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        Granularity::ALL.into_iter().find(|g| g.token() == s)
    }

    /// Start of the calendar period containing `t`. Weeks start on Monday.
    pub fn floor(self, t: Timestamp) -> Timestamp {
        let date = t.date_naive();
        match self {
            Granularity::Hour => Utc.with_ymd_and_hms(date.year(), date.month(), date.day(), t.hour(), 0, 0).unwrap(),
            Granularity::Day => midnight(date),
            Granularity::Week => midnight(date - Duration::days(date.weekday().num_days_from_monday() as i64)),
            Granularity::Month => midnight(NaiveDate::from_ymd_opt(date.year(), date.month(), 1).unwrap()),
        }
    }

    /// Start of the calendar period following the one that starts at
    /// `period_start`.
    pub fn next(self, period_start: Timestamp) -> Timestamp {
        match self {
            Granularity::Hour => period_start + Duration::hours(1),
            Granularity::Day => period_start + Duration::days(1),
            Granularity::Week => period_start + Duration::days(7),
            Granularity::Month => {
                let d = period_start.date_naive();
                let (y, m) = if d.month() == 12 { (d.year() + 1, 1) } else { (d.year(), d.month() + 1) };
                midnight(NaiveDate::from_ymd_opt(y, m, 1).unwrap())
            }
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

fn midnight(d: NaiveDate) -> Timestamp {
    Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).unwrap())
}

/// One calendar-aligned window, possibly clipped to the observation
/// interval at either end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Window {
    pub granularity: Granularity,
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Window {
    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t < self.end
    }

    /// Whether the window is shorter than its full calendar period.
    pub fn is_clipped(&self) -> bool {
        let floor = self.granularity.floor(self.start);
        floor != self.start || self.granularity.next(floor) != self.end
    }

    pub fn seconds(&self) -> i64 {
        (self.end - self.start).num_seconds()
    }
}

/// Calendar windows covering `interval`; the first and last are clipped to
/// it.
pub fn make_windows(interval: Interval, granularity: Granularity) -> Vec<Window> {
    let mut out = Vec::new();
    if interval.is_empty() {
        return out;
    }
    let mut period = granularity.floor(interval.start);
    while period < interval.end {
        let next = granularity.next(period);
        out.push(Window { granularity, start: period.max(interval.start), end: next.min(interval.end) });
        period = next;
    }
    out
}

/// Index of the window containing `t`, for sorted non-overlapping windows.
pub fn window_index(windows: &[Window], t: Timestamp) -> Option<usize> {
    let i = windows.partition_point(|w| w.start <= t).checked_sub(1)?;
    windows[i].contains(t).then_some(i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScopeKind {
    System,
    Rack,
    Node,
    Socket,
    Dimm,
}

impl ScopeKind {
    pub fn token(self) -> &'static str {
        match self {
            ScopeKind::System => "system",
            ScopeKind::Rack => "rack",
            ScopeKind::Node => "node",
            ScopeKind::Socket => "socket",
            ScopeKind::Dimm => "dimm",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        [ScopeKind::System, ScopeKind::Rack, ScopeKind::Node, ScopeKind::Socket, ScopeKind::Dimm]
            .into_iter()
            .find(|k| k.token() == s)
    }
}

/// Part of the machine a test aggregates over. Sockets are identified
/// within their node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    System,
    Rack(RackId),
    Node(NodeId),
    Socket(NodeId, SocketId),
    Dimm(DimmId),
}

impl Scope {
    pub fn kind(&self) -> ScopeKind {
        match self {
            Scope::System => ScopeKind::System,
            Scope::Rack(_) => ScopeKind::Rack,
            Scope::Node(_) => ScopeKind::Node,
            Scope::Socket(..) => ScopeKind::Socket,
            Scope::Dimm(_) => ScopeKind::Dimm,
        }
    }

    /// Identifier for reports; sockets render as `node/socket`.
    pub fn id(&self) -> String {
        match self {
            Scope::System => String::new(),
            Scope::Rack(r) => r.to_string(),
            Scope::Node(n) => n.to_string(),
            Scope::Socket(n, s) => format!("{n}/{s}"),
            Scope::Dimm(d) => d.to_string(),
        }
    }
}

/// One value per window.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSeries {
    pub windows: Vec<Window>,
    pub values: Vec<f64>,
}

impl CountSeries {
    pub fn zeros(windows: &[Window]) -> Self {
        Self { windows: windows.to_vec(), values: vec![0.0; windows.len()] }
    }

    pub fn is_constant(&self) -> bool {
        self.values.windows(2).all(|w| w[0] == w[1])
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Error values paired with the mean neutron rate of the same windows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairedSeries {
    pub windows: Vec<Window>,
    pub neutron: Vec<f64>,
    pub errors: Vec<f64>,
}

impl PairedSeries {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Keep only windows matching `keep`.
    pub fn retain(&mut self, mut keep: impl FnMut(&Window, f64, f64) -> bool) {
        let mut w = Vec::new();
        let mut n = Vec::new();
        let mut e = Vec::new();
        for i in 0..self.windows.len() {
            if keep(&self.windows[i], self.neutron[i], self.errors[i]) {
                w.push(self.windows[i]);
                n.push(self.neutron[i]);
                e.push(self.errors[i]);
            }
        }
        self.windows = w;
        self.neutron = n;
        self.errors = e;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> Timestamp {
        s.parse().unwrap()
    }

    #[test]
    fn clipped_months() {
        let w = make_windows(Interval::new(ts("2015-01-15T00:00:00Z"), ts("2015-03-10T00:00:00Z")), Granularity::Month);
        assert_eq!(w.len(), 3);
        assert_eq!(w[0].start, ts("2015-01-15T00:00:00Z"));
        assert_eq!(w[0].end, ts("2015-02-01T00:00:00Z"));
        assert!(w[0].is_clipped());
        assert!(!w[1].is_clipped());
        assert_eq!(w[2].end, ts("2015-03-10T00:00:00Z"));
        assert!(w[2].is_clipped());
    }

    #[test]
    fn hours_in_a_day() {
        let w = make_windows(Interval::new(ts("2015-06-01T00:00:00Z"), ts("2015-06-02T00:00:00Z")), Granularity::Hour);
        assert_eq!(w.len(), 24);
        assert!(w.iter().all(|w| !w.is_clipped()));
    }

    #[test]
    fn empty_interval() {
        let t = ts("2015-06-01T00:00:00Z");
        assert!(make_windows(Interval::new(t, t), Granularity::Day).is_empty());
    }

    #[test]
    fn weeks_start_monday() {
        // 2015-06-03 is a Wednesday.
        let w = make_windows(Interval::new(ts("2015-06-03T12:00:00Z"), ts("2015-06-20T00:00:00Z")), Granularity::Week);
        assert_eq!(w[0].start, ts("2015-06-03T12:00:00Z"));
        assert_eq!(w[0].end, ts("2015-06-08T00:00:00Z"));
        assert_eq!(w[1].start.weekday(), chrono::Weekday::Mon);
        assert_eq!(w.len(), 3);
    }

    #[test]
    fn december_rollover_and_lookup() {
        let w = make_windows(Interval::new(ts("2014-12-01T00:00:00Z"), ts("2015-02-01T00:00:00Z")), Granularity::Month);
        assert_eq!(w.len(), 2);
        assert_eq!(window_index(&w, ts("2015-01-31T23:59:59Z")), Some(1));
        assert_eq!(window_index(&w, ts("2015-02-01T00:00:00Z")), None);
        assert_eq!(window_index(&w, ts("2014-11-30T00:00:00Z")), None);
    }
}
