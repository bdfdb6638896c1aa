use super::{check_finite, StatsError};
use crate::timegrid::PairedSeries;

/// Percentile by linear interpolation between order statistics at
/// `h = (n - 1) q / 100`.
pub fn percentile(sample: &[f64], q: f64) -> Result<f64, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(StatsError::BadPercentile(q));
    }
    check_finite(sample)?;
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    Ok(match s.get(lo + 1) {
        Some(&next) if frac > 0.0 => s[lo] + frac * (next - s[lo]),
        _ => s[lo],
    })
}

/// Split error values into windows whose neutron mean exceeds `threshold`
/// and the rest.
pub fn partition_by_threshold(paired: &PairedSeries, threshold: f64) -> (Vec<f64>, Vec<f64>) {
    let mut high = Vec::new();
    let mut rest = Vec::new();
    for (&n, &e) in paired.neutron.iter().zip(&paired.errors) {
        if n > threshold {
            high.push(e);
        } else {
            rest.push(e);
        }
    }
    (high, rest)
}
