use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use cosmicdram::ingest::{format_timestamp, validate_dataset, Dataset, NeutronSeries, Severity, UncorrectedErrorEvent};
use cosmicdram::mlpredict::{
    build_dataset, default_grid, run_experiment, EvaluationReport, ExperimentConfig, Hyperparameters, LabeledDataset,
    MitigationParams, Target,
};
use cosmicdram::synth::{self, SynthConfig};
use cosmicdram::testbench::{
    enumerate_specs, spec_fields, summarize, write_suite_table, EnumOptions, ErrorClass, Suite, SuiteOptions, TestKind,
    Workbench,
};
use cosmicdram::timegrid::{
    aggregate, align, exclude_top_dimms, heatmap_bins, hour_of_day_profile, make_windows, window_index, Granularity,
    Interval, Located, Metric, PairedSeries, Scope, Window,
};
use cosmicdram::Timestamp;
use serde_json::{json, Value};

use crate::inputs::{DataArgs, Loaded};
use crate::manifest::{sha256_hex, InputDigest, OutDir, RunManifest};
use crate::{Command, PredictArgs, SuiteArgs};

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Validate { data, out } => validate(&data, out.as_deref()),
        Command::Timeline { data, granularity, out } => timeline(&data, granularity, &out),
        Command::Correlate(args) => suite(&args, None),
        Command::Ks { suite: args, percentiles } => suite(&args, Some(&percentiles)),
        Command::Hourly { data, class, utc_offset, exclude_top_dimms, out } => {
            hourly(&data, class, utc_offset, exclude_top_dimms, &out)
        }
        Command::Heatmap { data, class, granularity, x_bins, y_bins, y_log, out } => {
            heatmap(&data, class, granularity, x_bins, y_bins, y_log, &out)
        }
        Command::Predict(args) => predict(&args),
        Command::Synth { config, out } => synthesize(&config, &out),
    }
    .map(|code| code.unwrap_or(ExitCode::SUCCESS))
}

type Outcome = Result<Option<ExitCode>>;

fn interval_json(iv: Option<&Interval>) -> Value {
    match iv {
        Some(iv) => json!({"start": format_timestamp(iv.start), "end": format_timestamp(iv.end)}),
        None => Value::Null,
    }
}

/// Neutron series and an interval, both required.
fn with_neutron(data: &DataArgs) -> Result<(Loaded, NeutronSeries, Interval)> {
    let mut loaded = data.load(true)?;
    let neutron = loaded.neutron.take().expect("required by load");
    let interval = data.interval(Some(&neutron))?.context("the neutron log is empty; pass --start and --end")?;
    Ok((loaded, neutron, interval))
}

fn ue_errors(d: &Dataset) -> Vec<&UncorrectedErrorEvent> {
    d.ue.iter().filter(|e| e.cause.is_error()).collect()
}

fn in_interval<T: Located + Clone>(events: &[T], iv: Option<&Interval>) -> Vec<T> {
    events.iter().filter(|e| iv.is_none_or(|iv| iv.contains(e.timestamp()))).cloned().collect()
}

fn system_counts<T: Located>(events: &[T], d: &Dataset, windows: &[Window]) -> Vec<f64> {
    aggregate(events, &d.topology, windows, &Scope::System, |_, _| true, Metric::EventCount).values
}

fn csv_body(write: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        write(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn validate(data: &DataArgs, out: Option<&std::path::Path>) -> Outcome {
    let loaded = data.load(false)?;
    let interval = data.interval(loaded.neutron.as_ref())?;
    let findings = validate_dataset(&loaded.dataset, interval.as_ref());
    let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
    for f in &findings {
        println!("{f}");
    }
    println!("{} findings: {errors} errors, {} warnings", findings.len(), findings.len() - errors);
    if let Some(dir) = out {
        let m =
            RunManifest::new("validate", loaded.digests, vec![], json!({"interval": interval_json(interval.as_ref())}));
        let body = csv_body(|w| {
            w.write_record(["severity", "kind", "source", "index", "message"])?;
            for f in &findings {
                let sev = if f.severity == Severity::Error { "error" } else { "warning" };
                w.write_record([sev, f.kind.token(), f.source, &f.index.to_string(), &f.message])?;
            }
            Ok(())
        })?;
        OutDir::create(dir, m)?.csv("validation.csv", "validation v1", &body)?;
    }
    Ok((errors > 0).then(|| ExitCode::from(crate::EXIT_INPUT)))
}

fn mean_rate(neutron: &NeutronSeries, start: Timestamp, end: Timestamp) -> Option<(usize, f64)> {
    let r = neutron.range(start, end);
    if r.is_empty() {
        return None;
    }
    let s = &neutron.samples()[r];
    Some((s.len(), s.iter().map(|x| x.rate).sum::<f64>() / s.len() as f64))
}

fn timeline(data: &DataArgs, g: Granularity, out: &std::path::Path) -> Outcome {
    let (loaded, neutron, interval) = with_neutron(data)?;
    let d = &loaded.dataset;
    let windows = make_windows(interval, g);
    let ce = system_counts(&d.ce, d, &windows);
    let ue = system_counts(&ue_errors(d), d, &windows);
    let mb = system_counts(&d.scrub, d, &windows);
    let months = make_windows(interval, Granularity::Month);
    let month_means: Vec<Option<f64>> =
        months.iter().map(|m| mean_rate(&neutron, m.start, m.end).map(|x| x.1)).collect();
    let overall = mean_rate(&neutron, interval.start, interval.end).map(|x| x.1);
    let body = csv_body(|w| {
        w.write_record([
            "window_start",
            "window_end",
            "clipped",
            "neutron_samples",
            "neutron_mean",
            "ce_count",
            "ue_count",
            "mb_count",
            "month",
            "month_neutron_mean",
            "month_variation_pct",
        ])?;
        for (i, win) in windows.iter().enumerate() {
            let stats = mean_rate(&neutron, win.start, win.end);
            let mi = window_index(&months, win.start).expect("months cover the interval");
            let mm = month_means[mi];
            let pct = match (mm, overall) {
                (Some(m), Some(o)) if o != 0.0 => Some(100.0 * (m - o) / o),
                _ => None,
            };
            w.write_record([
                format_timestamp(win.start),
                format_timestamp(win.end),
                win.is_clipped().to_string(),
                stats.map_or(0, |s| s.0).to_string(),
                num(stats.map(|s| s.1)),
                ce[i].to_string(),
                ue[i].to_string(),
                mb[i].to_string(),
                format_timestamp(months[mi].start),
                num(mm),
                num(pct),
            ])?;
        }
        Ok(())
    })?;
    let m = RunManifest::new(
        "timeline",
        loaded.digests,
        vec![],
        json!({"interval": interval_json(Some(&interval)), "granularity": g.token()}),
    );
    OutDir::create(out, m)?.csv("timeline.csv", "timeline v1", &body)?;
    println!("{} windows", windows.len());
    Ok(None)
}

fn suite(args: &SuiteArgs, percentiles: Option<&[f64]>) -> Outcome {
    if let Some(ps) = percentiles {
        ensure!(!ps.is_empty(), "--percentiles needs at least one value");
        for &q in ps {
            ensure!((0.0..=100.0).contains(&q), "percentile {q} outside [0, 100]");
        }
    }
    ensure!(args.alpha > 0.0 && args.alpha < 1.0, "--alpha must lie in (0, 1)");
    let (loaded, neutron, interval) = with_neutron(&args.data)?;
    let class = args.class;
    let mut opts = EnumOptions::defaults(class);
    if !args.scopes.is_empty() {
        opts.scope_kinds = args.scopes.clone();
        opts.scope_kinds.sort();
        opts.scope_kinds.dedup();
    }
    if !args.windows.is_empty() {
        opts.windows = args.windows.clone();
        opts.windows.sort();
        opts.windows.dedup();
    }
    if args.dimm_scope {
        opts = opts.with_dimms();
    }
    let specs = enumerate_specs(class, &loaded.dataset.topology, &opts);
    let options = SuiteOptions {
        drop_zero_windows: args.drop_zero_windows,
        exclude_clipped: args.exclude_clipped,
        normalize_exposure: !args.no_exposure_normalization,
    };
    let bench = Workbench::new(&loaded.dataset, &neutron, interval, options);
    let (kind, suite) = match percentiles {
        None => (TestKind::Kendall, bench.run_kendall_suite(&specs)),
        Some(ps) => (TestKind::Ks, bench.run_ks_suite(&specs, ps)),
    };
    let config = json!({
        "interval": interval_json(Some(&interval)),
        "class": class.token(),
        "scopes": opts.scope_kinds.iter().map(|k| k.token()).collect::<Vec<_>>(),
        "windows": opts.windows.iter().map(|g| g.token()).collect::<Vec<_>>(),
        "drop_zero_windows": args.drop_zero_windows,
        "exclude_clipped": args.exclude_clipped,
        "normalize_exposure": !args.no_exposure_normalization,
        "include_rejected": !args.skip_rejected,
        "alpha": args.alpha,
        "percentiles": percentiles,
    });
    let name = kind.token();
    let command = if kind == TestKind::Kendall { "correlate" } else { "ks" };
    let mut out = OutDir::create(&args.out, RunManifest::new(command, loaded.digests, vec![], config))?;
    let mut body = Vec::new();
    write_suite_table(&mut body, &suite, kind, !args.skip_rejected)?;
    out.csv(&format!("{name}_suite.csv"), &format!("{name}_suite v1"), &body)?;
    let doc = summary_json(&suite, specs.len(), args.alpha);
    println!(
        "{} specs, {} tests, {} rejected, {} significant at {}",
        specs.len(),
        suite.outcomes.len(),
        suite.rejected.len(),
        doc["significant"].as_array().map_or(0, Vec::len),
        args.alpha
    );
    out.json(&format!("{name}_summary.json"), doc)?;
    Ok(None)
}

fn summary_json(suite: &Suite, specs: usize, alpha: f64) -> Value {
    let s = summarize(&suite.outcomes, alpha);
    let mut rejected = serde_json::Map::new();
    for (_, r) in &suite.rejected {
        let e = rejected.entry(r.token()).or_insert(json!(0));
        *e = json!(e.as_u64().unwrap_or(0) + 1);
    }
    let significant: Vec<Value> = s
        .significant
        .iter()
        .map(|sig| {
            let o = &suite.outcomes[sig.index];
            let cols: Vec<String> = spec_fields(&o.spec);
            json!({
                "spec": cols,
                "percentile": o.percentile,
                "stat": sig.stat,
                "p_adj": sig.p_adj,
                "band": sig.band.map(|b| b.token()),
            })
        })
        .collect();
    json!({
        "specs": specs,
        "tests": s.total,
        "rejected": rejected,
        "status": s.status_tally,
        "alpha": alpha,
        "negative": s.negative,
        "sorted_stats": s.sorted_stats,
        "raw_p_histogram": s.raw_histogram.to_vec(),
        "adjusted_p_histogram": s.adjusted_histogram.to_vec(),
        "significant": significant,
    })
}

fn profiles<T: Located + Clone>(events: &[T], offset: i32, fraction: f64) -> Result<([u64; 24], [u64; 24], usize)> {
    let ex = exclude_top_dimms(events, fraction)?;
    Ok((hour_of_day_profile(events, offset), hour_of_day_profile(&ex.kept, offset), ex.excluded.len()))
}

fn peak(p: &[u64; 24]) -> usize {
    (0..24).max_by_key(|&h| (p[h], std::cmp::Reverse(h))).unwrap_or(0)
}

fn hourly(data: &DataArgs, class: ErrorClass, offset: i32, fraction: f64, out: &std::path::Path) -> Outcome {
    ensure!((-23..=23).contains(&offset), "--utc-offset must lie in [-23, 23]");
    let loaded = data.load(false)?;
    let interval = data.interval(loaded.neutron.as_ref())?;
    let iv = interval.as_ref();
    let d = &loaded.dataset;
    let (before, after, excluded) = match class {
        ErrorClass::Ce => profiles(&in_interval(&d.ce, iv), offset, fraction)?,
        ErrorClass::Ue => profiles(&in_interval(&ue_errors(d), iv), offset, fraction)?,
        ErrorClass::Mb => profiles(&in_interval(&d.scrub, iv), offset, fraction)?,
    };
    let body = csv_body(|w| {
        w.write_record(["hour", "before", "after"])?;
        for h in 0..24 {
            w.write_record([h.to_string(), before[h].to_string(), after[h].to_string()])?;
        }
        Ok(())
    })?;
    let m = RunManifest::new(
        "hourly",
        loaded.digests,
        vec![],
        json!({
            "interval": interval_json(iv),
            "class": class.token(),
            "utc_offset": offset,
            "exclude_top_dimms": fraction,
        }),
    );
    OutDir::create(out, m)?.csv("hourly.csv", "hourly v1", &body)?;
    println!("excluded {excluded} units; peak hour {} before, {} after", peak(&before), peak(&after));
    Ok(None)
}

fn system_paired<T: Located>(events: &[T], d: &Dataset, neutron: &NeutronSeries, windows: &[Window]) -> PairedSeries {
    let counts = aggregate(events, &d.topology, windows, &Scope::System, |_, _| true, Metric::EventCount);
    align(neutron, &counts)
}

#[allow(clippy::too_many_arguments)]
fn heatmap(
    data: &DataArgs,
    class: ErrorClass,
    g: Granularity,
    x_bins: usize,
    y_bins: usize,
    y_log: bool,
    out: &std::path::Path,
) -> Outcome {
    let (loaded, neutron, interval) = with_neutron(data)?;
    let d = &loaded.dataset;
    let windows = make_windows(interval, g);
    let paired = match class {
        ErrorClass::Ce => system_paired(&d.ce, d, &neutron, &windows),
        ErrorClass::Ue => system_paired(&ue_errors(d), d, &neutron, &windows),
        ErrorClass::Mb => system_paired(&d.scrub, d, &neutron, &windows),
    };
    let h = heatmap_bins(&paired, x_bins, y_bins, y_log)?;
    let body = csv_body(|w| {
        w.write_record(["x_lo", "x_hi", "y_lo", "y_hi", "count"])?;
        for (yi, row) in h.counts.iter().enumerate() {
            for (xi, &c) in row.iter().enumerate() {
                w.write_record([
                    h.x_edges[xi].to_string(),
                    h.x_edges[xi + 1].to_string(),
                    h.y_edges[yi].to_string(),
                    h.y_edges[yi + 1].to_string(),
                    c.to_string(),
                ])?;
            }
        }
        Ok(())
    })?;
    let m = RunManifest::new(
        "heatmap",
        loaded.digests,
        vec![],
        json!({
            "interval": interval_json(Some(&interval)),
            "class": class.token(),
            "granularity": g.token(),
            "x_bins": x_bins,
            "y_bins": y_bins,
            "y_log": y_log,
        }),
    );
    OutDir::create(out, m)?.csv("heatmap.csv", "heatmap v1", &body)?;
    println!("{} windows binned", paired.len());
    Ok(None)
}

fn hyper_json(h: &Hyperparameters) -> Value {
    json!({"trees": h.trees, "max_depth": h.max_depth, "min_leaf": h.min_leaf})
}

fn report_json(r: &EvaluationReport) -> Value {
    let features: serde_json::Map<String, Value> =
        r.feature_importance.iter().map(|(n, v)| (n.clone(), json!(v))).collect();
    json!({
        "auc": r.auc,
        "validation_auc": r.validation_auc,
        "hyperparameters": hyper_json(&r.hyper),
        "group_importance": r.group_importance,
        "feature_importance": features,
        "saved_node_hours": r.saved_node_hours,
        "confusion": {"tp": r.confusion.tp, "fp": r.confusion.fp, "tn": r.confusion.tn, "fn": r.confusion.fn_},
        "train_rows": r.train_rows,
        "train_positives": r.train_positives,
        "test_rows": r.test_rows,
        "test_positives": r.test_positives,
    })
}

fn predict(args: &PredictArgs) -> Outcome {
    ensure!(args.undersample >= 0.0, "--undersample must be non-negative");
    ensure!(args.trees > 0 && args.min_leaf > 0, "--trees and --min-leaf must be positive");
    let (loaded, neutron, interval) = with_neutron(&args.data)?;
    let labeled: LabeledDataset = build_dataset(&loaded.dataset, &neutron, args.target, interval, args.tick);
    ensure!(labeled.rows() > 0, "no prediction rows: interval too short for the target horizon");
    let grid = match args.grid.as_str() {
        "fixed" => vec![Hyperparameters {
            trees: args.trees,
            max_depth: (args.max_depth > 0).then_some(args.max_depth),
            min_leaf: args.min_leaf,
        }],
        _ => default_grid(),
    };
    let benefit = args.benefit.or_else(|| {
        (!loaded.jobs.is_empty())
            .then(|| loaded.jobs.iter().map(|j| j.node_hours()).sum::<f64>() / loaded.jobs.len() as f64 / 2.0)
    });
    let mitigation = match (args.target, benefit) {
        (Target::UeNextDay, Some(b)) => Some(MitigationParams {
            cost_per_mitigation: args.mitigation_cost,
            benefit_per_true_positive: b,
            training_cost: args.training_cost,
        }),
        _ => None,
    };
    let mut config = ExperimentConfig::new(args.target, args.seed);
    config.grid = grid;
    config.undersample_ratio = (args.undersample > 0.0).then_some(args.undersample);
    config.permute_neutron = args.permute_neutron;
    config.decision_threshold = args.threshold;
    config.mitigation = mitigation;
    let (model, report) = run_experiment(&labeled, &config);
    let mut doc = json!({
        "target": args.target.token(),
        "rows": labeled.rows(),
        "positives": labeled.positives(),
        "features": labeled.n_features(),
        "report": report_json(&report),
    });
    if args.compare {
        let mut other = config.clone();
        other.permute_neutron = !config.permute_neutron;
        let (_, r2) = run_experiment(&labeled, &other);
        doc["reference"] = report_json(&r2);
        doc["reference_permuted_neutron"] = json!(other.permute_neutron);
        doc["auc_difference"] = json!(match (report.auc, r2.auc) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        });
    }
    let snapshot = json!({
        "interval": interval_json(Some(&interval)),
        "target": args.target.token(),
        "tick_seconds": args.tick.num_seconds(),
        "permute_neutron": args.permute_neutron,
        "compare": args.compare,
        "grid": config.grid.iter().map(hyper_json).collect::<Vec<_>>(),
        "undersample": config.undersample_ratio,
        "threshold": args.threshold,
        "mitigation": mitigation.map(|m| json!({
            "cost_per_mitigation": m.cost_per_mitigation,
            "benefit_per_true_positive": m.benefit_per_true_positive,
            "training_cost": m.training_cost,
        })),
    });
    let mut out = OutDir::create(&args.out, RunManifest::new("predict", loaded.digests, vec![args.seed], snapshot))?;
    if let Some(path) = &args.save_model {
        std::fs::write(path, model.to_text()).with_context(|| format!("writing {}", path.display()))?;
    }
    match report.auc {
        Some(a) => println!("test AUC {a:.4}"),
        None => println!("test AUC undefined: the test split lacks a class"),
    }
    out.json("predict_report.json", doc)?;
    Ok(None)
}

fn synthesize(config_path: &std::path::Path, out: &std::path::Path) -> Outcome {
    let bytes = std::fs::read(config_path).with_context(|| format!("reading {}", config_path.display()))?;
    let text = std::str::from_utf8(&bytes).context("configuration is not UTF-8")?;
    let config: SynthConfig = toml::from_str(text).with_context(|| format!("in {}", config_path.display()))?;
    let s = match synth::generate(&config) {
        Ok(s) => s,
        Err(e) => bail!("invalid configuration: {e}"),
    };
    let paths = synth::write_dataset(out, &s).with_context(|| format!("writing into {}", out.display()))?;
    let mut outputs = Vec::new();
    for p in &paths {
        let b = std::fs::read(p)?;
        outputs.push(json!({
            "file": p.file_name().map(|f| f.to_string_lossy().into_owned()),
            "sha256": sha256_hex(&b),
        }));
    }
    let input = InputDigest {
        role: "config".into(),
        file: config_path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        sha256: sha256_hex(&bytes),
    };
    let m = RunManifest::new("synth", vec![input], vec![config.seed], serde_json::to_value(&config)?);
    let mut dir = OutDir::create(out, m)?;
    let hot: Vec<&str> = s.hot_dimms.iter().map(|d| d.as_str()).collect();
    dir.json("manifest.json", json!({"outputs": outputs, "hot_dimms": hot}))?;
    println!(
        "{} CEs, {} UEs, {} scrubber errors, {} neutron samples",
        s.dataset.ce.len(),
        s.dataset.ue.len(),
        s.dataset.scrub.len(),
        s.neutron.len()
    );
    Ok(None)
}
