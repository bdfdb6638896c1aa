use std::io::Read;

use chrono::{DateTime, SubsecRound, Utc};

use super::{
    CellLocation, CorrectedErrorEvent, Detection, DimmId, IngestError, JobRecord, NeutronSample, NeutronSeries, NodeId,
    ScanExposureRecord, ScrubberErrorEvent, UeCause, UncorrectedErrorEvent,
};
use crate::Timestamp;

pub(crate) const NEUTRON_HEADER: &[&str] = &["timestamp", "rate"];
pub(crate) const CE_HEADER: &[&str] =
    &["timestamp", "node", "dimm", "rank", "bank", "row", "column", "detection", "multiplicity"];
pub(crate) const UE_HEADER: &[&str] = &["timestamp", "node", "dimm", "cause"];
pub(crate) const SCRUB_HEADER: &[&str] = &["timestamp", "node", "address", "bits_flipped"];
pub(crate) const EXPOSURE_HEADER: &[&str] = &["interval_start", "interval_end", "node", "mb_scanned"];
pub(crate) const INVENTORY_HEADER: &[&str] =
    &["dimm", "node", "socket", "rack", "manufacturer", "technology", "capacity_mb"];
pub(crate) const JOB_HEADER: &[&str] = &["node", "start", "end"];

/// Row of a validated table: its 1-based line number and fields.
pub(crate) struct Row {
    pub line: u64,
    pub record: csv::StringRecord,
}

impl Row {
    pub fn get(&self, i: usize) -> &str {
        self.record.get(i).unwrap_or("")
    }

    pub fn err(&self, reason: impl Into<String>) -> IngestError {
        IngestError::malformed(self.line, reason)
    }

    pub fn timestamp(&self, i: usize) -> Result<Timestamp, IngestError> {
        parse_timestamp(self.get(i)).ok_or_else(|| self.err(format!("bad timestamp `{}`", self.get(i))))
    }

    pub fn id(&self, i: usize, what: &str) -> Result<&str, IngestError> {
        let v = self.get(i);
        if v.is_empty() {
            Err(self.err(format!("empty {what}")))
        } else {
            Ok(v)
        }
    }

    pub fn opt_u32(&self, i: usize, what: &str) -> Result<Option<u32>, IngestError> {
        let v = self.get(i);
        if v.is_empty() {
            return Ok(None);
        }
        v.parse().map(Some).map_err(|_| self.err(format!("bad {what} `{v}`")))
    }

    pub fn positive_u32(&self, i: usize, what: &str) -> Result<u32, IngestError> {
        match self.get(i).parse::<u32>() {
            Ok(v) if v >= 1 => Ok(v),
            _ => Err(self.err(format!("{what} must be a positive integer, got `{}`", self.get(i)))),
        }
    }

    pub fn non_negative_f64(&self, i: usize, what: &str) -> Result<f64, IngestError> {
        match self.get(i).parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
            _ => Err(self.err(format!("{what} must be finite and non-negative, got `{}`", self.get(i)))),
        }
    }
}

pub(crate) fn parse_timestamp(s: &str) -> Option<Timestamp> {
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.with_timezone(&Utc).trunc_subsecs(0))
}

/// Read a table with the given header, yielding data rows in order.
pub(crate) fn read_table<R: Read>(source: R, header: &[&str]) -> Result<Vec<Row>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let expected = header.join(",");
    let mut rows = Vec::new();
    let mut saw_header = false;
    for result in reader.records() {
        let record = result.map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => IngestError::Io(std::io::Error::other(e.to_string())),
            _ => IngestError::malformed(e.position().map_or(0, |p| p.line()), e.to_string()),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if !saw_header {
            let found: Vec<&str> = record.iter().collect();
            if found != header {
                return Err(IngestError::BadHeader { line, expected, found: found.join(",") });
            }
            saw_header = true;
            continue;
        }
        if record.len() != header.len() {
            return Err(IngestError::malformed(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        rows.push(Row { line, record });
    }
    if !saw_header {
        return Err(IngestError::MissingHeader { expected });
    }
    Ok(rows)
}

/// Series-level attributes that the neutron file format does not carry.
#[derive(Debug, Clone)]
pub struct NeutronMeta {
    pub monitor_id: String,
    pub corrected: bool,
}

impl Default for NeutronMeta {
    fn default() -> Self {
        Self { monitor_id: "unknown".to_string(), corrected: true }
    }
}

/// Parse a `timestamp,rate` neutron log. Timestamps must increase strictly.
pub fn parse_neutron_log<R: Read>(source: R, meta: &NeutronMeta) -> Result<NeutronSeries, IngestError> {
    let rows = read_table(source, NEUTRON_HEADER)?;
    let mut samples: Vec<NeutronSample> = Vec::with_capacity(rows.len());
    for row in &rows {
        let timestamp = row.timestamp(0)?;
        let rate = row.non_negative_f64(1, "rate")?;
        if samples.last().is_some_and(|prev| prev.timestamp >= timestamp) {
            return Err(IngestError::NonMonotonicTimestamp { line: row.line });
        }
        samples.push(NeutronSample { timestamp, rate, corrected: meta.corrected });
    }
    NeutronSeries::new(meta.monitor_id.clone(), samples)
}

pub fn parse_ce_log<R: Read>(source: R) -> Result<Vec<CorrectedErrorEvent>, IngestError> {
    read_table(source, CE_HEADER)?
        .iter()
        .map(|row| {
            let location = CellLocation {
                rank: row.opt_u32(3, "rank")?,
                bank: row.opt_u32(4, "bank")?,
                row: row.opt_u32(5, "row")?,
                column: row.opt_u32(6, "column")?,
            };
            if !location.is_consistent() {
                return Err(row.err("row/column present without rank and bank"));
            }
            let detection = Detection::from_token(row.get(7))
                .ok_or_else(|| row.err(format!("unknown detection `{}`", row.get(7))))?;
            Ok(CorrectedErrorEvent {
                timestamp: row.timestamp(0)?,
                node: NodeId::new(row.id(1, "node")?),
                dimm: DimmId::new(row.id(2, "dimm")?),
                location,
                detection,
                multiplicity: row.positive_u32(8, "multiplicity")?,
            })
        })
        .collect()
}

pub fn parse_ue_log<R: Read>(source: R) -> Result<Vec<UncorrectedErrorEvent>, IngestError> {
    read_table(source, UE_HEADER)?
        .iter()
        .map(|row| {
            let cause =
                UeCause::from_token(row.get(3)).ok_or_else(|| row.err(format!("unknown cause `{}`", row.get(3))))?;
            Ok(UncorrectedErrorEvent {
                timestamp: row.timestamp(0)?,
                node: NodeId::new(row.id(1, "node")?),
                dimm: DimmId::new(row.id(2, "dimm")?),
                cause,
            })
        })
        .collect()
}

fn parse_address(s: &str) -> Option<u64> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

pub fn parse_scrub_log<R: Read>(source: R) -> Result<Vec<ScrubberErrorEvent>, IngestError> {
    read_table(source, SCRUB_HEADER)?
        .iter()
        .map(|row| {
            let address = parse_address(row.get(2)).ok_or_else(|| row.err(format!("bad address `{}`", row.get(2))))?;
            Ok(ScrubberErrorEvent {
                timestamp: row.timestamp(0)?,
                node: NodeId::new(row.id(1, "node")?),
                address,
                bits_flipped: row.positive_u32(3, "bits_flipped")?,
            })
        })
        .collect()
}

pub fn parse_exposure_log<R: Read>(source: R) -> Result<Vec<ScanExposureRecord>, IngestError> {
    read_table(source, EXPOSURE_HEADER)?
        .iter()
        .map(|row| {
            let interval_start = row.timestamp(0)?;
            let interval_end = row.timestamp(1)?;
            if interval_start >= interval_end {
                return Err(row.err("interval_start must precede interval_end"));
            }
            Ok(ScanExposureRecord {
                interval_start,
                interval_end,
                node: NodeId::new(row.id(2, "node")?),
                mb_scanned: row.non_negative_f64(3, "mb_scanned")?,
            })
        })
        .collect()
}

pub fn parse_job_log<R: Read>(source: R) -> Result<Vec<JobRecord>, IngestError> {
    read_table(source, JOB_HEADER)?
        .iter()
        .map(|row| {
            let start = row.timestamp(1)?;
            let end = row.timestamp(2)?;
            if start >= end {
                return Err(row.err("job start must precede end"));
            }
            Ok(JobRecord { node: NodeId::new(row.id(0, "node")?), start, end })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neutron(text: &str) -> Result<NeutronSeries, IngestError> {
        parse_neutron_log(text.as_bytes(), &NeutronMeta::default())
    }

    #[test]
    fn header_only_is_empty_series() {
        let s = neutron("timestamp,rate\n").unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn single_neutron_row() {
        let s = neutron("timestamp,rate\n2015-06-01T00:00:00Z,71.3\n").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.samples()[0].rate, 71.3);
        assert!(s.samples()[0].corrected);
    }

    #[test]
    fn duplicate_timestamp_rejected_at_second_row() {
        let err = neutron("timestamp,rate\n2015-06-01T00:00:00Z,71.3\n2015-06-01T00:00:00Z,70.0\n").unwrap_err();
        assert!(matches!(err, IngestError::NonMonotonicTimestamp { line: 3 }), "{err:?}");
    }

    #[test]
    fn offsets_normalised_to_utc() {
        let s = neutron("# comment\ntimestamp,rate\n2015-06-01T02:00:00+02:00,70\n").unwrap();
        assert_eq!(format!("{}", s.samples()[0].timestamp), "2015-06-01 00:00:00 UTC");
    }

    #[test]
    fn negative_rate_and_bad_header() {
        assert!(matches!(
            neutron("timestamp,rate\n2015-06-01T00:00:00Z,-1\n"),
            Err(IngestError::MalformedRow { line: 2, .. })
        ));
        assert!(matches!(neutron("time,rate\n"), Err(IngestError::BadHeader { .. })));
        assert!(matches!(neutron(""), Err(IngestError::MissingHeader { .. })));
    }

    const CE_HEAD: &str = "timestamp,node,dimm,rank,bank,row,column,detection,multiplicity\n";

    #[test]
    fn ce_multiplicity_without_location() {
        let text = format!("{CE_HEAD}2015-01-01T00:00:00Z,n1,d1,,,,,read,3\n");
        let ev = parse_ce_log(text.as_bytes()).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].multiplicity, 3);
        assert_eq!(ev[0].location, CellLocation::default());
    }

    #[test]
    fn ce_scrub_detection() {
        let text = format!("{CE_HEAD}2015-01-01T00:00:00Z,n1,d1,0,1,5,9,scrub,1\n");
        let ev = parse_ce_log(text.as_bytes()).unwrap();
        assert_eq!(ev[0].detection, Detection::PatrolScrub);
        assert_eq!(ev[0].location.cell(), Some((0, 1, 5, 9)));
    }

    #[test]
    fn ce_column_without_bank_rejected() {
        let text = format!("{CE_HEAD}2015-01-01T00:00:00Z,n1,d1,0,,,9,read,1\n");
        assert!(matches!(parse_ce_log(text.as_bytes()), Err(IngestError::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn ce_zero_multiplicity_rejected() {
        let text = format!("{CE_HEAD}2015-01-01T00:00:00Z,n1,d1,,,,,read,0\n");
        assert!(parse_ce_log(text.as_bytes()).is_err());
    }

    #[test]
    fn ue_causes() {
        let ok = "timestamp,node,dimm,cause\n2015-01-01T00:00:00Z,n1,d1,scrub_failed\n";
        assert_eq!(parse_ue_log(ok.as_bytes()).unwrap()[0].cause, UeCause::ScrubFailed);
        let bad = "timestamp,node,dimm,cause\n2015-01-01T00:00:00Z,n1,d1,melted\n";
        assert!(matches!(parse_ue_log(bad.as_bytes()), Err(IngestError::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn ue_count_preserved() {
        let mut text = String::from("timestamp,node,dimm,cause\n");
        let start = parse_timestamp("2014-10-01T00:00:00Z").unwrap();
        for i in 0..71 {
            let t = start + chrono::Duration::hours(i * 24 * 11);
            text.push_str(&format!("{},n{},d{},uncorrected_ecc\n", super::super::format_timestamp(t), i % 7, i));
        }
        assert_eq!(parse_ue_log(text.as_bytes()).unwrap().len(), 71);
    }

    #[test]
    fn scrub_and_exposure() {
        let s = "timestamp,node,address,bits_flipped\n2015-01-01T00:00:00Z,n1,0x10,2\n2015-01-01T00:00:01Z,n1,16,1\n";
        let ev = parse_scrub_log(s.as_bytes()).unwrap();
        assert_eq!(ev[0].address, 16);
        assert_eq!(ev[1].address, 16);
        let bad = "timestamp,node,address,bits_flipped\n2015-01-01T00:00:00Z,n1,1,0\n";
        assert!(parse_scrub_log(bad.as_bytes()).is_err());

        let e = "interval_start,interval_end,node,mb_scanned\n2015-01-01T00:00:00Z,2015-01-01T01:00:00Z,n1,512\n";
        assert_eq!(parse_exposure_log(e.as_bytes()).unwrap()[0].mb_scanned, 512.0);
        let inverted =
            "interval_start,interval_end,node,mb_scanned\n2015-01-01T01:00:00Z,2015-01-01T00:00:00Z,n1,512\n";
        assert!(parse_exposure_log(inverted.as_bytes()).is_err());
    }

    #[test]
    fn wrong_field_count_is_located() {
        let text = format!("{CE_HEAD}2015-01-01T00:00:00Z,n1,d1,read,1\n");
        assert!(matches!(parse_ce_log(text.as_bytes()), Err(IngestError::MalformedRow { line: 2, .. })));
    }
}
