use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timegrid::Granularity;
use crate::Timestamp;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("{0} must be finite and non-negative")]
    NegativeRate(&'static str),
    #[error("multiplier must be at least 1, got {0}")]
    Multiplier(f64),
    #[error("percentile must be in [0, 100], got {0}")]
    Percentile(f64),
    #[error("observation interval is empty")]
    EmptyInterval,
    #[error("unknown coupling window {0:?}")]
    Window(String),
    #[error("{0} is out of range")]
    OutOfRange(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyShape {
    pub racks: u32,
    pub nodes_per_rack: u32,
    pub sockets_per_node: u32,
    pub dimms_per_socket: u32,
    #[serde(default = "default_capacity")]
    pub capacity_mb: u64,
}

fn default_capacity() -> u64 {
    8192
}

impl Default for TopologyShape {
    fn default() -> Self {
        Self { racks: 2, nodes_per_rack: 4, sockets_per_node: 2, dimms_per_socket: 2, capacity_mb: default_capacity() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeutronModel {
    /// Counts per second at the start of the interval.
    pub base: f64,
    /// Change of the base rate per day.
    #[serde(default)]
    pub trend_per_day: f64,
    /// Standard deviation of independent hourly Gaussian noise.
    #[serde(default)]
    pub noise_std: f64,
}

impl Default for NeutronModel {
    fn default() -> Self {
        Self { base: 71.0, trend_per_day: 0.0, noise_std: 1.0 }
    }
}

/// CE intensity per DIMM-hour. UE and scrubber intensities are scaled by the
/// same coupling factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum FaultModel {
    Null {
        rate: f64,
    },
    /// `base * (1 + slope * (rate - mean rate))`, clamped at zero.
    LinearCoupled {
        base: f64,
        slope: f64,
    },
    /// `base * multiplier` in windows whose mean rate exceeds the given
    /// percentile of all window means.
    ThresholdCoupled {
        base: f64,
        percentile: f64,
        multiplier: f64,
    },
    /// Uniform background plus a few DIMMs repeating errors on a fixed set
    /// of cells.
    HotDimm {
        base: f64,
        dimm_count: u32,
        cell_count: u32,
        /// Repeated errors per hot DIMM-hour.
        repeat_rate: f64,
        /// Emit every repeated error during this UTC hour of day.
        #[serde(default)]
        burst_hour: Option<u32>,
    },
}

impl FaultModel {
    pub fn base_rate(&self) -> f64 {
        match *self {
            FaultModel::Null { rate } => rate,
            FaultModel::LinearCoupled { base, .. }
            | FaultModel::ThresholdCoupled { base, .. }
            | FaultModel::HotDimm { base, .. } => base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diurnal {
    /// UTC hour of maximum intensity.
    pub peak_hour: u32,
    /// Relative amplitude of the daily cosine, in `[0, 1]`.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub start: Timestamp,
    pub end: Timestamp,
    #[serde(default = "default_monitor")]
    pub monitor_id: String,
    #[serde(default)]
    pub topology: TopologyShape,
    #[serde(default)]
    pub neutron: NeutronModel,
    pub fault: FaultModel,
    /// Window over which neutron rates are averaged before they modulate
    /// error intensity.
    #[serde(default = "default_window")]
    pub coupling_window: String,
    #[serde(default)]
    pub diurnal: Option<Diurnal>,
    /// UEs per DIMM-hour.
    #[serde(default)]
    pub ue_rate: f64,
    /// UE warnings per DIMM-hour.
    #[serde(default)]
    pub ue_warning_rate: f64,
    /// Scrubber-detected corruptions per node-hour.
    #[serde(default)]
    pub mb_rate: f64,
    /// Scrubber throughput per node; zero disables exposure records.
    #[serde(default)]
    pub scan_mb_per_hour: f64,
    /// Fraction of CEs logged without a location.
    #[serde(default)]
    pub location_missing: f64,
    /// Fraction of CEs found by patrol scrubbing.
    #[serde(default = "default_patrol")]
    pub patrol_fraction: f64,
    /// Mean job length in hours; zero disables the job log.
    #[serde(default = "default_job_hours")]
    pub job_mean_hours: f64,
}

fn default_monitor() -> String {
    "synthetic".into()
}

fn default_window() -> String {
    "hour".into()
}

fn default_patrol() -> f64 {
    0.3
}

fn default_job_hours() -> f64 {
    12.0
}

impl SynthConfig {
    /// A null-model configuration over `[start, end)` with default shape.
    pub fn null(seed: u64, start: Timestamp, end: Timestamp, rate: f64) -> Self {
        Self {
            seed,
            start,
            end,
            monitor_id: default_monitor(),
            topology: TopologyShape::default(),
            neutron: NeutronModel::default(),
            fault: FaultModel::Null { rate },
            coupling_window: default_window(),
            diurnal: None,
            ue_rate: 0.0,
            ue_warning_rate: 0.0,
            mb_rate: 0.0,
            scan_mb_per_hour: 0.0,
            location_missing: 0.0,
            patrol_fraction: default_patrol(),
            job_mean_hours: default_job_hours(),
        }
    }

    pub fn coupling_granularity(&self) -> Result<Granularity, SynthError> {
        Granularity::from_token(&self.coupling_window).ok_or_else(|| SynthError::Window(self.coupling_window.clone()))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.end <= self.start {
            return Err(SynthError::EmptyInterval);
        }
        self.coupling_granularity()?;
        let nonneg = |v: f64, name| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(SynthError::NegativeRate(name))
            }
        };
        let fraction = |v: f64, name| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SynthError::OutOfRange(name))
            }
        };
        nonneg(self.neutron.base, "neutron base")?;
        nonneg(self.neutron.noise_std, "neutron noise")?;
        if !self.neutron.trend_per_day.is_finite() {
            return Err(SynthError::OutOfRange("neutron trend"));
        }
        nonneg(self.fault.base_rate(), "fault base rate")?;
        nonneg(self.ue_rate, "ue_rate")?;
        nonneg(self.ue_warning_rate, "ue_warning_rate")?;
        nonneg(self.mb_rate, "mb_rate")?;
        nonneg(self.scan_mb_per_hour, "scan_mb_per_hour")?;
        nonneg(self.job_mean_hours, "job_mean_hours")?;
        fraction(self.location_missing, "location_missing")?;
        fraction(self.patrol_fraction, "patrol_fraction")?;
        match self.fault {
            FaultModel::LinearCoupled { slope, .. } if !slope.is_finite() => {
                return Err(SynthError::OutOfRange("slope"));
            }
            FaultModel::ThresholdCoupled { percentile, multiplier, .. } => {
                if !(0.0..=100.0).contains(&percentile) {
                    return Err(SynthError::Percentile(percentile));
                }
                if !(multiplier >= 1.0 && multiplier.is_finite()) {
                    return Err(SynthError::Multiplier(multiplier));
                }
            }
            FaultModel::HotDimm { repeat_rate, burst_hour, cell_count, .. } => {
                nonneg(repeat_rate, "repeat_rate")?;
                if burst_hour.is_some_and(|h| h > 23) {
                    return Err(SynthError::OutOfRange("burst_hour"));
                }
                if cell_count == 0 {
                    return Err(SynthError::OutOfRange("cell_count"));
                }
            }
            _ => {}
        }
        if let Some(d) = self.diurnal {
            if d.peak_hour > 23 {
                return Err(SynthError::OutOfRange("peak_hour"));
            }
            fraction(d.amplitude, "diurnal amplitude")?;
        }
        Ok(())
    }
}
