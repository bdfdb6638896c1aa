use std::io::{self, Write};

use super::parse::{CE_HEADER, EXPOSURE_HEADER, INVENTORY_HEADER, JOB_HEADER, NEUTRON_HEADER, SCRUB_HEADER, UE_HEADER};
use super::{
    CorrectedErrorEvent, JobRecord, NeutronSeries, ScanExposureRecord, ScrubberErrorEvent, Topology,
    UncorrectedErrorEvent,
};
use crate::Timestamp;

pub fn format_timestamp(t: Timestamp) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn header<W: Write>(out: &mut W, h: &[&str]) -> io::Result<()> {
    writeln!(out, "{}", h.join(","))
}

fn opt(v: Option<u32>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_neutron_log<W: Write>(out: &mut W, series: &NeutronSeries) -> io::Result<()> {
    header(out, NEUTRON_HEADER)?;
    for s in series.samples() {
        writeln!(out, "{},{}", format_timestamp(s.timestamp), s.rate)?;
    }
    Ok(())
}

pub fn write_ce_log<W: Write>(out: &mut W, events: &[CorrectedErrorEvent]) -> io::Result<()> {
    header(out, CE_HEADER)?;
    for e in events {
        let l = &e.location;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            format_timestamp(e.timestamp),
            e.node,
            e.dimm,
            opt(l.rank),
            opt(l.bank),
            opt(l.row),
            opt(l.column),
            e.detection.token(),
            e.multiplicity
        )?;
    }
    Ok(())
}

pub fn write_ue_log<W: Write>(out: &mut W, events: &[UncorrectedErrorEvent]) -> io::Result<()> {
    header(out, UE_HEADER)?;
    for e in events {
        writeln!(out, "{},{},{},{}", format_timestamp(e.timestamp), e.node, e.dimm, e.cause.token())?;
    }
    Ok(())
}

pub fn write_scrub_log<W: Write>(out: &mut W, events: &[ScrubberErrorEvent]) -> io::Result<()> {
    header(out, SCRUB_HEADER)?;
    for e in events {
        writeln!(out, "{},{},{},{}", format_timestamp(e.timestamp), e.node, e.address, e.bits_flipped)?;
    }
    Ok(())
}

pub fn write_exposure_log<W: Write>(out: &mut W, records: &[ScanExposureRecord]) -> io::Result<()> {
    header(out, EXPOSURE_HEADER)?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{}",
            format_timestamp(r.interval_start),
            format_timestamp(r.interval_end),
            r.node,
            r.mb_scanned
        )?;
    }
    Ok(())
}

pub fn write_inventory<W: Write>(out: &mut W, topology: &Topology) -> io::Result<()> {
    header(out, INVENTORY_HEADER)?;
    for d in topology.dimms() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            d.dimm,
            d.node,
            d.socket,
            d.rack,
            d.manufacturer.token(),
            d.technology.token(),
            d.capacity_mb
        )?;
    }
    Ok(())
}

pub fn write_job_log<W: Write>(out: &mut W, jobs: &[JobRecord]) -> io::Result<()> {
    header(out, JOB_HEADER)?;
    for j in jobs {
        writeln!(out, "{},{},{}", j.node, format_timestamp(j.start), format_timestamp(j.end))?;
    }
    Ok(())
}
