//! Run directories, manifests and CSV tables.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::harness::MetricsRecord;
use crate::{Error, Result};

pub const OUT_ENV: &str = "DKLAB_OUT";
pub const DEFAULT_OUT_ROOT: &str = "runs";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Formats a real with 6 significant digits, `%g` style.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mut exp = x.abs().log10().floor() as i32;
    // rounding can carry into the next decade
    if (x.abs() / 10f64.powi(exp)) >= 9.999995 {
        exp += 1;
    }
    if !(-4..6).contains(&exp) {
        let s = format!("{x:.5e}");
        let (mantissa, e) = s.split_once('e').unwrap();
        return format!("{}e{}", trim_zeros(mantissa), e);
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One CSV cell.
pub enum Cell {
    Real(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Real(x) => format_real(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid("csv", format!("{other:?}")),
    }
}

pub const METRICS_HEADER: [&str; 9] = ["run_id", "seed", "epoch", "step", "metric", "value", "variant", "ratio", "schedule"];

pub fn metrics_rows(records: &[MetricsRecord]) -> Vec<Vec<Cell>> {
    records
        .iter()
        .map(|r| {
            vec![
                r.run_id.as_str().into(),
                r.seed.into(),
                r.epoch.into(),
                r.step.into(),
                r.metric.as_str().into(),
                r.value.into(),
                r.variant.as_str().into(),
                r.ratio.into(),
                r.schedule.as_str().into(),
            ]
        })
        .collect()
}

/// Everything needed to reproduce a run; written before any work starts.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub start_timestamp: String,
    pub dataset_checksum: Option<String>,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize, dataset_checksum: Option<String>) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            start_timestamp: chrono::Utc::now().to_rfc3339(),
            dataset_checksum,
            config: serde_json::to_value(config).map_err(|e| Error::invalid("manifest", e.to_string()))?,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::invalid("manifest", e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }
}

/// Picks and creates the run directory. `out` is used as given; otherwise
/// `run-<timestamp>-<seed>` under `$DKLAB_OUT` (default `runs`). An existing
/// non-empty directory is refused unless `force` is set.
pub fn prepare_run_dir(out: Option<&Path>, seed: u64, force: bool) -> Result<PathBuf> {
    let dir = match out {
        Some(p) => p.to_path_buf(),
        None => {
            let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT), PathBuf::from);
            let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%3f");
            root.join(format!("run-{stamp}-{seed}"))
        }
    };
    let occupied = dir.is_dir() && std::fs::read_dir(&dir)?.next().is_some();
    if occupied && !force {
        return Err(Error::OutputExists(dir.display().to_string()));
    }
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
