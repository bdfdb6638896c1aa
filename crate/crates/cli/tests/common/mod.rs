#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cosmicdram"))
        .args(args)
        .env_remove("COSMICDRAM_THREADS")
        .output()
        .expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Write `config` and generate a dataset from it under `dir/data`.
pub fn synth(dir: &Path, config: &str) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let cfg = dir.join("synth.toml");
    std::fs::write(&cfg, config).unwrap();
    let data = dir.join("data");
    run_ok(&["synth", "--config", p(&cfg), "--out", p(&data)]);
    data
}

/// CSV records after the leading comment lines, header included.
pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(body.as_bytes())
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

pub fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub const SMALL: &str = r#"
seed = 11
start = "2016-01-01T00:00:00Z"
end = "2016-03-01T00:00:00Z"
ue_rate = 0.001
mb_rate = 0.02
scan_mb_per_hour = 500.0

[topology]
racks = 1
nodes_per_rack = 2
sockets_per_node = 2
dimms_per_socket = 2

[fault]
model = "null"
rate = 0.02
"#;
