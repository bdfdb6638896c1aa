use std::io::Write;

use super::{ErrorClass, Suite, TestKind, TestSpec};

pub const SUITE_HEADER: [&str; 19] = [
    "error_class",
    "manufacturer",
    "technology",
    "transience",
    "detection",
    "cell",
    "metric",
    "ue_cause",
    "bit_class",
    "window",
    "scope_kind",
    "scope_id",
    "kind",
    "percentile",
    "n",
    "stat",
    "p_raw",
    "p_adj",
    "status",
];

/// `all` for an unset filter, empty when the filter does not apply.
fn filter<T>(applies: bool, v: Option<T>, token: impl Fn(T) -> &'static str) -> &'static str {
    match (applies, v) {
        (false, _) => "",
        (true, None) => "all",
        (true, Some(v)) => token(v),
    }
}

/// The first twelve suite columns for a spec.
pub fn spec_fields(s: &TestSpec) -> Vec<String> {
    let ce = s.error_class == ErrorClass::Ce;
    let ue = s.error_class == ErrorClass::Ue;
    let mb = s.error_class == ErrorClass::Mb;
    vec![
        s.error_class.token().to_string(),
        filter(!mb, s.manufacturer, |m| m.token()).to_string(),
        filter(!mb, s.technology, |t| t.token()).to_string(),
        filter(ce, s.transience, |t| t.token()).to_string(),
        filter(ce, s.detection, |d| d.token()).to_string(),
        filter(ce, s.cell, |c| c.token()).to_string(),
        filter(ce, s.metric, |m| m.token()).to_string(),
        filter(ue, s.ue_cause, |c| c.token()).to_string(),
        filter(mb, s.bit_class, |b| b.token()).to_string(),
        s.window.token().to_string(),
        s.scope.kind().token().to_string(),
        s.scope.id(),
    ]
}

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write a suite as CSV: outcomes, then rejected specs as status rows when
/// `with_rejected` is set.
pub fn write_suite_table<W: Write>(out: W, suite: &Suite, kind: TestKind, with_rejected: bool) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUITE_HEADER)?;
    for o in &suite.outcomes {
        let mut row = spec_fields(&o.spec);
        row.extend([
            o.kind.token().to_string(),
            num(o.percentile),
            o.result.n().to_string(),
            num(o.result.stat()),
            num(o.result.p_raw()),
            num(o.p_adj),
            o.result.status().token().to_string(),
        ]);
        w.write_record(&row)?;
    }
    if with_rejected {
        for (spec, r) in &suite.rejected {
            let mut row = spec_fields(spec);
            row.extend([kind.token(), "", "", "", "", "", r.token()].map(String::from));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
