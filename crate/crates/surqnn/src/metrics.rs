//! Metric tables. Every table is written both as CSV and as JSON lines.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use surqnn_core::gradcheck::GradReport;
use surqnn_core::pipeline::Metrics;
use surqnn_core::surrogate::StepRecord;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
    pub lr: f64,
    pub surrogate_mse: Option<f64>,
}

impl From<&Metrics> for MetricsRow {
    fn from(m: &Metrics) -> Self {
        MetricsRow {
            epoch: m.epoch,
            split: m.split.as_str().to_string(),
            loss: m.loss,
            accuracy: m.accuracy,
            lr: m.lr,
            surrogate_mse: m.surrogate_mse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradRow {
    pub index: usize,
    pub shift: f64,
    pub fd: f64,
    pub abs_err: f64,
}

impl From<&GradReport> for GradRow {
    fn from(r: &GradReport) -> Self {
        GradRow {
            index: r.index,
            shift: r.shift_value,
            fd: r.fd_value,
            abs_err: r.abs_err,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: usize,
    pub eta: f64,
    pub surrogate_mse: f64,
    pub true_loss: f64,
    pub accepted: bool,
    pub trust_radius: f64,
    pub grad_probe_norm: Option<f64>,
}

impl From<&StepRecord> for StepRow {
    fn from(r: &StepRecord) -> Self {
        StepRow {
            step: r.step,
            eta: r.eta,
            surrogate_mse: r.surrogate_mse,
            true_loss: r.true_loss,
            accepted: r.accepted,
            trust_radius: r.trust_radius,
            grad_probe_norm: r.grad_probe_norm,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut f = File::create(path).map_err(io_err(path))?;
    for r in rows {
        let line = serde_json::to_string(r).map_err(|e| CliError::Format(e.to_string()))?;
        writeln!(f, "{line}").map_err(io_err(path))?;
    }
    Ok(())
}

pub fn append_jsonl<T: Serialize>(path: &Path, row: &T) -> CliResult<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let line = serde_json::to_string(row).map_err(|e| CliError::Format(e.to_string()))?;
    writeln!(f, "{line}").map_err(io_err(path))
}

/// Writes `<dir>/<stem>.csv` and `<dir>/<stem>.jsonl`.
pub fn write_table<T: Serialize>(dir: &Path, stem: &str, rows: &[T]) -> CliResult<()> {
    write_csv(&dir.join(format!("{stem}.csv")), rows)?;
    write_jsonl(&dir.join(format!("{stem}.jsonl")), rows)
}
