//! Result files: manifest.json, metrics.csv, summary.json, events.csv and
//! traces.csv.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::harness::{RunOutput, TraceRow};

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub policy: &'static str,
    pub threads: usize,
    pub runtime_s: f64,
    pub anomalies: u64,
    pub anomaly_budget: u64,
    pub config: &'a ScenarioConfig,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a header-only file when `rows` is empty, so the output set is
/// always complete.
fn write_csv_or_header<T: Serialize>(path: &Path, rows: &[T], header: &str) -> Result<()> {
    if rows.is_empty() {
        let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        writeln!(f, "{header}")?;
        return Ok(());
    }
    write_csv(path, rows)
}

pub fn write_run(dir: &Path, manifest: &Manifest<'_>, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("manifest.json"), manifest)?;
    write_csv(&dir.join("metrics.csv"), &out.rows)?;
    write_json(&dir.join("summary.json"), &out.summary)?;
    write_csv_or_header(&dir.join("events.csv"), &out.events, "drop,interval,ue_id,event,old_value,new_value")?;
    if !out.traces.is_empty() {
        write_traces(&dir.join("traces.csv"), &out.traces)?;
    }
    Ok(())
}

pub fn write_traces(path: &Path, rows: &[TraceRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    write_csv(path, rows)
}
