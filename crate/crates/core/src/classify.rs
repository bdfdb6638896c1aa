//! Derived labels for corrected errors.
//!
//! Labels depend on a DIMM's whole error history, so they are computed in a
//! second pass once every event is known. Row and column matching is scoped
//! to one `(dimm, rank, bank)` address space.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::ingest::{
    CorrectedErrorEvent, Detection, DimmId, Manufacturer, ScrubberErrorEvent, Technology, Topology, UeCause,
    UncorrectedErrorEvent,
};

/// Category tuple of one corrected error. `None` marks an unknown value,
/// which only matches an `All` filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CeCategory {
    pub manufacturer: Option<Manufacturer>,
    pub technology: Option<Technology>,
    pub detection: Detection,
    pub transient: Option<bool>,
    pub single_cell: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CeLabels {
    pub transient: Option<bool>,
    pub single_cell: Option<bool>,
    pub category: CeCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UeCategory {
    pub manufacturer: Option<Manufacturer>,
    pub technology: Option<Technology>,
    pub cause: UeCause,
}

/// Bit-width class of a scrubber-detected corruption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BitClass {
    One,
    Two,
    Three,
    Four,
    Five,
    SixPlus,
}

impl BitClass {
    pub const ALL: [BitClass; 6] =
        [BitClass::One, BitClass::Two, BitClass::Three, BitClass::Four, BitClass::Five, BitClass::SixPlus];

    pub fn token(self) -> &'static str {
        match self {
            BitClass::One => "1",
            BitClass::Two => "2",
            BitClass::Three => "3",
            BitClass::Four => "4",
            BitClass::Five => "5",
            BitClass::SixPlus => "6+",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        BitClass::ALL.into_iter().find(|c| c.token() == s)
    }
}

pub fn classify_bit_width(event: &ScrubberErrorEvent) -> BitClass {
    bit_class(event.bits_flipped)
}

pub fn bit_class(bits_flipped: u32) -> BitClass {
    match bits_flipped {
        0 | 1 => BitClass::One,
        2 => BitClass::Two,
        3 => BitClass::Three,
        4 => BitClass::Four,
        5 => BitClass::Five,
        _ => BitClass::SixPlus,
    }
}

type BankKey = (u32, u32);

#[derive(Default)]
struct AddressCounts {
    cells: HashMap<(BankKey, u32, u32), u32>,
    rows: HashMap<(BankKey, u32), u32>,
    columns: HashMap<(BankKey, u32), u32>,
}

impl AddressCounts {
    fn from_events<'a>(events: impl IntoIterator<Item = &'a CorrectedErrorEvent>) -> Self {
        let mut c = AddressCounts::default();
        for e in events {
            let l = &e.location;
            let (Some(rank), Some(bank)) = (l.rank, l.bank) else {
                continue;
            };
            let bank = (rank, bank);
            if let Some(row) = l.row {
                *c.rows.entry((bank, row)).or_default() += 1;
            }
            if let Some(col) = l.column {
                *c.columns.entry((bank, col)).or_default() += 1;
            }
            if let (Some(row), Some(col)) = (l.row, l.column) {
                *c.cells.entry((bank, row, col)).or_default() += 1;
            }
        }
        c
    }
}

/// Transience of each event of one DIMM.
///
/// An event is transient when its cell appears once over the whole history
/// and no other event shares its row or its column in the same rank and
/// bank. Events without a full location get `None` and never disqualify
/// others beyond the row or column they do carry.
pub fn label_transience(events: &[CorrectedErrorEvent]) -> Vec<Option<bool>> {
    let refs: Vec<&CorrectedErrorEvent> = events.iter().collect();
    transience(&refs, &AddressCounts::from_events(refs.iter().copied()))
}

fn transience(events: &[&CorrectedErrorEvent], counts: &AddressCounts) -> Vec<Option<bool>> {
    events
        .iter()
        .map(|e| {
            let (rank, bank, row, col) = e.location.cell()?;
            let bank = (rank, bank);
            Some(
                counts.cells[&(bank, row, col)] == 1
                    && counts.rows[&(bank, row)] == 1
                    && counts.columns[&(bank, col)] == 1,
            )
        })
        .collect()
}

/// Whether each event's exact `(rank, bank, row, column)` occurs only once
/// in the DIMM's history. `None` when the location is incomplete.
pub fn label_cell_multiplicity(events: &[CorrectedErrorEvent]) -> Vec<Option<bool>> {
    let refs: Vec<&CorrectedErrorEvent> = events.iter().collect();
    cell_multiplicity(&refs, &AddressCounts::from_events(refs.iter().copied()))
}

fn cell_multiplicity(events: &[&CorrectedErrorEvent], counts: &AddressCounts) -> Vec<Option<bool>> {
    events
        .iter()
        .map(|e| {
            let (rank, bank, row, col) = e.location.cell()?;
            Some(counts.cells[&((rank, bank), row, col)] == 1)
        })
        .collect()
}

pub fn derive_category(
    event: &CorrectedErrorEvent,
    transient: Option<bool>,
    single_cell: Option<bool>,
    topology: &Topology,
) -> CeCategory {
    let dimm = topology.dimm(&event.dimm);
    CeCategory {
        manufacturer: dimm.map(|d| d.manufacturer),
        technology: dimm.map(|d| d.technology),
        detection: event.detection,
        transient,
        single_cell,
    }
}

pub fn derive_ue_category(event: &UncorrectedErrorEvent, topology: &Topology) -> UeCategory {
    let dimm = topology.dimm(&event.dimm);
    UeCategory {
        manufacturer: dimm.map(|d| d.manufacturer),
        technology: dimm.map(|d| d.technology),
        cause: event.cause,
    }
}

/// Label every corrected error, index-aligned with `events`.
///
/// DIMMs are labelled independently and in parallel; output does not depend
/// on event order or thread count.
pub fn label_all(events: &[CorrectedErrorEvent], topology: &Topology) -> Vec<CeLabels> {
    let mut by_dimm: HashMap<&DimmId, Vec<usize>> = HashMap::new();
    for (i, e) in events.iter().enumerate() {
        by_dimm.entry(&e.dimm).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = by_dimm.into_values().collect();
    // (event index, transient, single cell)
    type Labelled = (usize, Option<bool>, Option<bool>);
    let per_group: Vec<Vec<Labelled>> = groups
        .par_iter()
        .map(|idx| {
            let evs: Vec<&CorrectedErrorEvent> = idx.iter().map(|&i| &events[i]).collect();
            let counts = AddressCounts::from_events(evs.iter().copied());
            let tr = transience(&evs, &counts);
            let sc = cell_multiplicity(&evs, &counts);
            idx.iter().zip(tr).zip(sc).map(|((&i, t), s)| (i, t, s)).collect()
        })
        .collect();
    let mut out = vec![None; events.len()];
    for (i, t, s) in per_group.into_iter().flatten() {
        out[i] = Some(CeLabels { transient: t, single_cell: s, category: derive_category(&events[i], t, s, topology) });
    }
    out.into_iter().map(|l| l.expect("every event labelled")).collect()
}
