//! Seeded synthetic datasets with known ground truth.
//!
//! Every random draw comes from a ChaCha stream keyed by the config seed and
//! the entity it belongs to, so generation parallelizes over DIMMs and nodes
//! without changing the output.

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Duration, Timelike};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

pub use config::{Diurnal, FaultModel, NeutronModel, SynthConfig, SynthError, TopologyShape};

use crate::ingest::{
    write_ce_log, write_exposure_log, write_inventory, write_job_log, write_neutron_log, write_scrub_log, write_ue_log,
    CellLocation, CorrectedErrorEvent, Dataset, Detection, DimmId, DimmRecord, JobRecord, Manufacturer, NeutronSample,
    NeutronSeries, NodeId, RackId, ScanExposureRecord, ScrubberErrorEvent, SocketId, Technology, Topology, UeCause,
    UncorrectedErrorEvent,
};
use crate::rng::{stream, stream_id};
use crate::stats::percentile;
use crate::timegrid::{make_windows, window_index, Interval};
use crate::Timestamp;

/// Standard file names of a dataset directory.
pub mod files {
    pub const NEUTRON: &str = "neutron.csv";
    pub const CE: &str = "ce.csv";
    pub const UE: &str = "ue.csv";
    pub const SCRUB: &str = "scrub.csv";
    pub const EXPOSURE: &str = "exposure.csv";
    pub const INVENTORY: &str = "inventory.csv";
    pub const JOBS: &str = "jobs.csv";
}

const NEUTRON_STREAM: u32 = 1;
const CE_STREAM: u32 = 2;
const UE_STREAM: u32 = 3;
const MB_STREAM: u32 = 4;
const HOT_PICK_STREAM: u32 = 5;
const HOT_STREAM: u32 = 6;
const JOB_STREAM: u32 = 7;

/// A generated dataset together with its ground truth.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub neutron: NeutronSeries,
    pub dataset: Dataset,
    pub jobs: Vec<JobRecord>,
    /// Per-hour factor applied to every error intensity.
    pub intensity: Vec<f64>,
    pub hot_dimms: Vec<DimmId>,
}

pub fn generate(config: &SynthConfig) -> Result<Synthetic, SynthError> {
    config.validate()?;
    let topology = gen_topology(&config.topology);
    let neutron = gen_neutron(config);
    let intensity = intensity_factors(config, &neutron)?;
    let errors = gen_errors(config, &topology, &intensity);
    let jobs = gen_jobs(config, &topology);
    Ok(Synthetic {
        neutron,
        dataset: Dataset { topology, ce: errors.ce, ue: errors.ue, scrub: errors.scrub, exposure: errors.exposure },
        jobs,
        intensity,
        hot_dimms: errors.hot_dimms,
    })
}

/// Racks `r00`, nodes `r00n000`, sockets numbered per node and DIMMs
/// `r00n000s0d0`. Manufacturer cycles with the global node index and
/// technology with every third node.
pub fn gen_topology(shape: &TopologyShape) -> Topology {
    let mut dimms = Vec::new();
    for r in 0..shape.racks {
        for n in 0..shape.nodes_per_rack {
            let j = (r * shape.nodes_per_rack + n) as usize;
            let node = format!("r{r:02}n{n:03}");
            for s in 0..shape.sockets_per_node {
                for d in 0..shape.dimms_per_socket {
                    dimms.push(DimmRecord {
                        dimm: DimmId::new(format!("{node}s{s}d{d}")),
                        node: NodeId::new(&node),
                        socket: SocketId::new(s.to_string()),
                        rack: RackId::new(format!("r{r:02}")),
                        manufacturer: Manufacturer::ALL[j % 3],
                        technology: Technology::ALL[(j / 3) % 3],
                        capacity_mb: shape.capacity_mb,
                    });
                }
            }
        }
    }
    Topology::new(dimms).expect("generated inventory is consistent")
}

fn hour_starts(config: &SynthConfig) -> Vec<Timestamp> {
    let mut out = Vec::new();
    let mut t = config.start;
    while t < config.end {
        out.push(t);
        t += Duration::hours(1);
    }
    out
}

/// Hourly samples of `base + trend * days + noise`, clamped at zero.
pub fn gen_neutron(config: &SynthConfig) -> NeutronSeries {
    let m = &config.neutron;
    let mut rng = stream(config.seed, stream_id(NEUTRON_STREAM, 0));
    let noise = Normal::new(0.0, m.noise_std).expect("validated noise");
    let samples = hour_starts(config)
        .into_iter()
        .enumerate()
        .map(|(h, timestamp)| {
            let eps = if m.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            NeutronSample {
                timestamp,
                rate: (m.base + m.trend_per_day * h as f64 / 24.0 + eps).max(0.0),
                corrected: true,
            }
        })
        .collect();
    NeutronSeries::new(config.monitor_id.clone(), samples).expect("hourly samples increase")
}

/// Factor multiplying every error intensity in each hour of the interval.
pub fn intensity_factors(config: &SynthConfig, neutron: &NeutronSeries) -> Result<Vec<f64>, SynthError> {
    let hours = hour_starts(config);
    let windows = make_windows(Interval::new(config.start, config.end), config.coupling_granularity()?);
    let samples = neutron.samples();
    let means: Vec<f64> = windows
        .iter()
        .map(|w| {
            let r = neutron.range(w.start, w.end);
            if r.is_empty() {
                f64::NAN
            } else {
                samples[r.clone()].iter().map(|s| s.rate).sum::<f64>() / r.len() as f64
            }
        })
        .collect();
    let window_rate = |t: Timestamp| window_index(&windows, t).map_or(f64::NAN, |i| means[i]);
    let factor: Box<dyn Fn(f64) -> f64> = match config.fault {
        FaultModel::Null { .. } | FaultModel::HotDimm { .. } => Box::new(|_| 1.0),
        FaultModel::LinearCoupled { slope, .. } => {
            let mean = samples.iter().map(|s| s.rate).sum::<f64>() / samples.len().max(1) as f64;
            Box::new(move |r| (1.0 + slope * (r - mean)).max(0.0))
        }
        FaultModel::ThresholdCoupled { percentile: p, multiplier, .. } => {
            let finite: Vec<f64> = means.iter().copied().filter(|m| m.is_finite()).collect();
            let threshold = percentile(&finite, p).unwrap_or(f64::INFINITY);
            Box::new(move |r| if r > threshold { multiplier } else { 1.0 })
        }
    };
    Ok(hours
        .iter()
        .map(|&t| {
            let r = window_rate(t);
            let mut f = if r.is_finite() { factor(r) } else { 1.0 };
            if let Some(d) = config.diurnal {
                let phase = (t.hour() as f64 - d.peak_hour as f64) * std::f64::consts::TAU / 24.0;
                f *= (1.0 + d.amplitude * phase.cos()).max(0.0);
            }
            f
        })
        .collect())
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    if lambda > 0.0 {
        Poisson::new(lambda).expect("positive finite rate").sample(rng) as u64
    } else {
        0
    }
}

fn within_hour(rng: &mut ChaCha8Rng, hour: Timestamp) -> Timestamp {
    hour + Duration::seconds(rng.random_range(0..3600))
}

fn random_cell(rng: &mut ChaCha8Rng) -> CellLocation {
    CellLocation::full(
        rng.random_range(0..2),
        rng.random_range(0..16),
        rng.random_range(0..65_536),
        rng.random_range(0..1024),
    )
}

/// Generated error logs.
#[derive(Debug, Clone, Default)]
pub struct Errors {
    pub ce: Vec<CorrectedErrorEvent>,
    pub ue: Vec<UncorrectedErrorEvent>,
    pub scrub: Vec<ScrubberErrorEvent>,
    pub exposure: Vec<ScanExposureRecord>,
    pub hot_dimms: Vec<DimmId>,
}

/// Poisson error logs given per-hour intensity factors.
pub fn gen_errors(config: &SynthConfig, topology: &Topology, intensity: &[f64]) -> Errors {
    let hours = hour_starts(config);
    let in_range = |t: &Timestamp| *t < config.end;
    let dimms = topology.dimms();
    let base = config.fault.base_rate();

    let hot: Vec<(usize, Vec<CellLocation>, f64, Option<u32>)> = match config.fault {
        FaultModel::HotDimm { dimm_count, cell_count, repeat_rate, burst_hour, .. } => {
            let mut rng = stream(config.seed, stream_id(HOT_PICK_STREAM, 0));
            let n = (dimm_count as usize).min(dimms.len());
            let mut picked: Vec<usize> = sample(&mut rng, dimms.len(), n).into_vec();
            picked.sort_unstable();
            picked
                .into_iter()
                .map(|i| {
                    let cells = (0..cell_count).map(|_| random_cell(&mut rng)).collect();
                    (i, cells, repeat_rate, burst_hour)
                })
                .collect()
        }
        _ => Vec::new(),
    };

    let mut ce: Vec<CorrectedErrorEvent> = dimms
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, d)| {
            let mut rng = stream(config.seed, stream_id(CE_STREAM, i as u32));
            let mut out = Vec::new();
            for (h, &start) in hours.iter().enumerate() {
                for _ in 0..poisson(&mut rng, base * intensity[h]) {
                    let timestamp = within_hour(&mut rng, start);
                    let location = if rng.random_bool(config.location_missing) {
                        CellLocation::default()
                    } else {
                        random_cell(&mut rng)
                    };
                    let detection = if rng.random_bool(config.patrol_fraction) {
                        Detection::PatrolScrub
                    } else {
                        Detection::MemoryRead
                    };
                    if in_range(&timestamp) {
                        out.push(CorrectedErrorEvent {
                            timestamp,
                            node: d.node.clone(),
                            dimm: d.dimm.clone(),
                            location,
                            detection,
                            multiplicity: 1,
                        });
                    }
                }
            }
            out
        })
        .collect();

    let repeated: Vec<CorrectedErrorEvent> = hot
        .par_iter()
        .flat_map_iter(|(i, cells, rate, burst)| {
            let d = &dimms[*i];
            let mut rng = stream(config.seed, stream_id(HOT_STREAM, *i as u32));
            let mut out = Vec::new();
            for &start in &hours {
                let n = match burst {
                    None => poisson(&mut rng, *rate),
                    Some(b) if start.hour() == *b => poisson(&mut rng, rate * 24.0),
                    Some(_) => 0,
                };
                for _ in 0..n {
                    let timestamp = within_hour(&mut rng, start);
                    let location = cells[rng.random_range(0..cells.len())];
                    if in_range(&timestamp) {
                        out.push(CorrectedErrorEvent {
                            timestamp,
                            node: d.node.clone(),
                            dimm: d.dimm.clone(),
                            location,
                            detection: Detection::MemoryRead,
                            multiplicity: 1,
                        });
                    }
                }
            }
            out
        })
        .collect();
    ce.extend(repeated);
    ce.sort_by_key(|e| e.timestamp);

    let mut ue: Vec<UncorrectedErrorEvent> = dimms
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, d)| {
            let mut rng = stream(config.seed, stream_id(UE_STREAM, i as u32));
            let mut out = Vec::new();
            for (h, &start) in hours.iter().enumerate() {
                let errors = poisson(&mut rng, config.ue_rate * intensity[h]);
                let warnings = poisson(&mut rng, config.ue_warning_rate * intensity[h]);
                for k in 0..errors + warnings {
                    let timestamp = within_hour(&mut rng, start);
                    let cause = if k >= errors {
                        UeCause::UeWarning
                    } else if rng.random_bool(0.7) {
                        UeCause::UncorrectedEcc
                    } else {
                        UeCause::ScrubFailed
                    };
                    if in_range(&timestamp) {
                        out.push(UncorrectedErrorEvent {
                            timestamp,
                            node: d.node.clone(),
                            dimm: d.dimm.clone(),
                            cause,
                        });
                    }
                }
            }
            out
        })
        .collect();
    ue.sort_by_key(|e| e.timestamp);

    let nodes: Vec<&NodeId> = topology.nodes().collect();
    let node_bytes = |n: &NodeId| -> u64 {
        topology.dimms().iter().filter(|d| d.node == *n).map(|d| d.capacity_mb << 20).sum::<u64>().max(1)
    };
    let mut scrub: Vec<ScrubberErrorEvent> = nodes
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, &node)| {
            let mut rng = stream(config.seed, stream_id(MB_STREAM, i as u32));
            let bytes = node_bytes(node);
            let mut out = Vec::new();
            for (h, &start) in hours.iter().enumerate() {
                for _ in 0..poisson(&mut rng, config.mb_rate * intensity[h]) {
                    let timestamp = within_hour(&mut rng, start);
                    let mut bits = 1;
                    while bits < 8 && rng.random_bool(0.5) {
                        bits += 1;
                    }
                    let address = rng.random_range(0..bytes);
                    if in_range(&timestamp) {
                        out.push(ScrubberErrorEvent { timestamp, node: node.clone(), address, bits_flipped: bits });
                    }
                }
            }
            out
        })
        .collect();
    scrub.sort_by_key(|e| e.timestamp);

    let mut exposure = Vec::new();
    if config.scan_mb_per_hour > 0.0 {
        let mut day = config.start;
        while day < config.end {
            let end = (day + Duration::days(1)).min(config.end);
            let hours = (end - day).num_seconds() as f64 / 3600.0;
            for &node in &nodes {
                exposure.push(ScanExposureRecord {
                    interval_start: day,
                    interval_end: end,
                    node: node.clone(),
                    mb_scanned: config.scan_mb_per_hour * hours,
                });
            }
            day = end;
        }
    }

    Errors { ce, ue, scrub, exposure, hot_dimms: hot.iter().map(|(i, ..)| dimms[*i].dimm.clone()).collect() }
}

/// Back-to-back jobs on every node with lengths uniform in
/// `(0, 2 * mean]` hours, truncated at the end of the interval.
pub fn gen_jobs(config: &SynthConfig, topology: &Topology) -> Vec<JobRecord> {
    if config.job_mean_hours <= 0.0 {
        return Vec::new();
    }
    let mut jobs: Vec<JobRecord> = topology
        .nodes()
        .enumerate()
        .flat_map(|(i, node)| {
            let mut rng = stream(config.seed, stream_id(JOB_STREAM, i as u32));
            let max_secs = (config.job_mean_hours * 7200.0).max(2.0) as i64;
            let mut out = Vec::new();
            let mut t = config.start;
            while t < config.end {
                let end = (t + Duration::seconds(rng.random_range(1..=max_secs))).min(config.end);
                out.push(JobRecord { node: node.clone(), start: t, end });
                t = end;
            }
            out
        })
        .collect();
    jobs.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.node.cmp(&b.node)));
    jobs
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> io::Result<PathBuf> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(path)
}

/// Write every log under its standard name in `dir`.
pub fn write_dataset(dir: &Path, s: &Synthetic) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let d = &s.dataset;
    Ok(vec![
        write_file(dir, files::NEUTRON, |w| write_neutron_log(w, &s.neutron))?,
        write_file(dir, files::CE, |w| write_ce_log(w, &d.ce))?,
        write_file(dir, files::UE, |w| write_ue_log(w, &d.ue))?,
        write_file(dir, files::SCRUB, |w| write_scrub_log(w, &d.scrub))?,
        write_file(dir, files::EXPOSURE, |w| write_exposure_log(w, &d.exposure))?,
        write_file(dir, files::INVENTORY, |w| write_inventory(w, &d.topology))?,
        write_file(dir, files::JOBS, |w| write_job_log(w, &s.jobs))?,
    ])
}
