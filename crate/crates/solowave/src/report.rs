//! Metric reports and task provenance records.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One row of a metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub file: String,
    pub metric: String,
    pub value: f64,
}

/// CSV with columns `file,metric,value`.
pub fn write_metrics(rows: &[MetricRow], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    r.deserialize().map(|row| row.map_err(|e| Error::format(path, e.to_string()))).collect()
}

/// What a task run did, appended to the run's `provenance.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub task: String,
    pub seed: Option<u64>,
    /// Scales that were synthesized, coarsest first.
    pub scales: Vec<usize>,
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    pub samples: usize,
    pub rate: u32,
    pub elapsed_ms: f64,
    pub unix_time: u64,
}

pub fn append_provenance(path: impl AsRef<Path>, record: &Provenance) -> Result<()> {
    let path = path.as_ref();
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let line = serde_json::to_string(record).expect("provenance serializes");
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

pub fn read_provenance(path: impl AsRef<Path>) -> Result<Vec<Provenance>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::format(path, e.to_string())))
        .collect()
}
