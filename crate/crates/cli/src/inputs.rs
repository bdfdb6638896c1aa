use std::path::{Path, PathBuf};

use crate::manifest::{sha256_hex, InputDigest};
use anyhow::{bail, Context, Result};
use chrono::{Duration, DurationRound};
use clap::Args;
use cosmicdram::ingest::{
    load_inventory, parse_ce_log, parse_exposure_log, parse_job_log, parse_neutron_log, parse_scrub_log, parse_ue_log,
    Dataset, JobRecord, NeutronMeta, NeutronSeries, Topology,
};
use cosmicdram::synth::files;
use cosmicdram::timegrid::Interval;
use cosmicdram::Timestamp;

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory holding inputs under their standard names.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub neutron: Option<PathBuf>,
    #[arg(long)]
    pub ce: Option<PathBuf>,
    #[arg(long)]
    pub ue: Option<PathBuf>,
    #[arg(long)]
    pub scrub: Option<PathBuf>,
    #[arg(long)]
    pub exposure: Option<PathBuf>,
    #[arg(long)]
    pub inventory: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<PathBuf>,
    /// Neutron monitor name recorded with the series.
    #[arg(long, default_value = "unknown")]
    pub monitor_id: String,
    /// Start of the observation interval (RFC 3339).
    #[arg(long)]
    pub start: Option<String>,
    /// End of the observation interval (RFC 3339, exclusive).
    #[arg(long)]
    pub end: Option<String>,
}

pub struct Loaded {
    pub dataset: Dataset,
    pub neutron: Option<NeutronSeries>,
    pub jobs: Vec<JobRecord>,
    pub digests: Vec<InputDigest>,
}

impl DataArgs {
    /// Explicit path, else the standard name under `--data` if it exists.
    fn resolve(&self, explicit: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
        if let Some(p) = explicit {
            return Some(p.clone());
        }
        let p = self.data.as_ref()?.join(name);
        p.exists().then_some(p)
    }

    pub fn load(&self, need_neutron: bool) -> Result<Loaded> {
        let mut digests = Vec::new();
        let mut read = |path: &Path, role: &str| -> Result<Vec<u8>> {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            digests.push(InputDigest {
                role: role.to_string(),
                file: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
                sha256: sha256_hex(&bytes),
            });
            Ok(bytes)
        };
        let neutron = match self.resolve(&self.neutron, files::NEUTRON) {
            Some(p) => {
                let meta = NeutronMeta { monitor_id: self.monitor_id.clone(), ..NeutronMeta::default() };
                let bytes = read(&p, "neutron")?;
                Some(parse_neutron_log(&bytes[..], &meta).with_context(|| format!("in {}", p.display()))?)
            }
            None if need_neutron => bail!("a neutron log is required (--neutron or --data)"),
            None => None,
        };
        let topology = match self.resolve(&self.inventory, files::INVENTORY) {
            Some(p) => load_inventory(&read(&p, "inventory")?[..]).with_context(|| format!("in {}", p.display()))?,
            None => Topology::default(),
        };
        macro_rules! optional {
            ($field:ident, $name:expr, $parse:ident) => {
                match self.resolve(&self.$field, $name) {
                    Some(p) => {
                        $parse(&read(&p, stringify!($field))?[..]).with_context(|| format!("in {}", p.display()))?
                    }
                    None => Vec::new(),
                }
            };
        }
        let ce = optional!(ce, files::CE, parse_ce_log);
        let ue = optional!(ue, files::UE, parse_ue_log);
        let scrub = optional!(scrub, files::SCRUB, parse_scrub_log);
        let exposure = optional!(exposure, files::EXPOSURE, parse_exposure_log);
        let jobs = optional!(jobs, files::JOBS, parse_job_log);
        Ok(Loaded { dataset: Dataset { topology, ce, ue, scrub, exposure }, neutron, jobs, digests })
    }

    /// `--start/--end`, defaulting to whole hours around the neutron series.
    pub fn interval(&self, neutron: Option<&NeutronSeries>) -> Result<Option<Interval>> {
        let parse = |s: &Option<String>, what| -> Result<Option<Timestamp>> {
            s.as_deref()
                .map(|v| {
                    chrono::DateTime::parse_from_rfc3339(v)
                        .map(|t| t.with_timezone(&chrono::Utc))
                        .with_context(|| format!("bad {what} timestamp {v:?}"))
                })
                .transpose()
        };
        let samples = neutron.map(|n| n.samples()).unwrap_or(&[]);
        let hour = Duration::hours(1);
        let start = match parse(&self.start, "--start")? {
            Some(t) => Some(t),
            None => samples.first().map(|s| s.timestamp.duration_trunc(hour).expect("hour truncation")),
        };
        let end = match parse(&self.end, "--end")? {
            Some(t) => Some(t),
            None => samples.last().map(|s| s.timestamp.duration_trunc(hour).expect("hour truncation") + hour),
        };
        match (start, end) {
            (Some(s), Some(e)) if e > s => Ok(Some(Interval::new(s, e))),
            (Some(_), Some(_)) => bail!("observation interval is empty"),
            _ => Ok(None),
        }
    }
}

/// `30s`, `1m`, `2h`, `1d` or `1w`.
pub fn parse_duration(s: &str) -> Result<Duration, String> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let n: i64 = num.parse().map_err(|_| format!("bad duration {s:?}"))?;
    let d = match unit {
        "s" => Duration::seconds(n),
        "m" | "min" => Duration::minutes(n),
        "h" => Duration::hours(n),
        "d" => Duration::days(n),
        "w" => Duration::weeks(n),
        _ => return Err(format!("bad duration unit in {s:?}; use s, m, h, d or w")),
    };
    if d <= Duration::zero() {
        return Err("duration must be positive".into());
    }
    Ok(d)
}
