//! Accuracy, plasticity metrics and run output files.
//!
//! A run directory holds `metrics.csv` (one row per task and epoch),
//! `growth_events.csv` and `summary.json`. List-valued CSV fields are
//! `;`-separated, hidden layers first.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::consolidation::ConsolidationState;
use crate::datasets::{argmax_columns, TaskData};
use crate::error::{Error, Result};
use crate::network::GrowableMlp;

pub const SCHEMA_VERSION: u32 = 1;

const EVAL_CHUNK: usize = 1000;

/// Test accuracy of `mlp` on one task split.
pub fn accuracy(mlp: &GrowableMlp, data: &TaskData) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("accuracy of an empty split"));
    }
    let mut correct = 0usize;
    for batch in data.sequential_batches(EVAL_CHUNK) {
        let trace = mlp.forward(&batch.x)?;
        correct += argmax_columns(&trace.logits)
            .iter()
            .zip(&batch.labels)
            .filter(|(p, l)| p == l)
            .count();
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Unweighted mean of per-task accuracies.
pub fn average_accuracy(mlp: &GrowableMlp, tasks_seen: &[&TaskData]) -> Result<f64> {
    if tasks_seen.is_empty() {
        return Err(Error::invalid("no tasks seen"));
    }
    let accs = tasks_seen
        .iter()
        .map(|t| accuracy(mlp, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&accs))
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Share of layer `layer`'s parameters whose effective learning rate
/// `1/(1+λF̃)` is below `threshold`.
pub fn locked_fraction(state: &ConsolidationState, lambda: f64, layer: usize, threshold: f64) -> f64 {
    let params = &state.fisher().layers[layer];
    if params.is_empty() {
        return 0.0;
    }
    let locked = params
        .values()
        .filter(|&f| 1.0 / (1.0 + lambda * f) < threshold)
        .count();
    locked as f64 / params.len() as f64
}

/// `Σ 1/(1+λF̃)` over all parameters.
pub fn effective_plastic_count(state: &ConsolidationState, lambda: f64) -> f64 {
    state.fisher().values().map(|f| 1.0 / (1.0 + lambda * f)).sum()
}

/// Metrics after one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// 0-based task index.
    pub task: usize,
    /// 0-based epoch within the task.
    pub epoch: usize,
    pub global_epoch: usize,
    /// Accuracy on every task seen so far, oldest first.
    pub task_accuracies: Vec<f64>,
    pub avg_accuracy: f64,
    pub param_count: usize,
    pub widths: Vec<usize>,
    /// Effective dimension of each hidden layer on the probe batch.
    pub ed: Vec<f64>,
    /// Locked fraction of every layer, output layer last.
    pub locked_fraction: Vec<f64>,
    pub n_eff_plastic: f64,
    pub train_loss: f64,
    /// Units added at this epoch, all layers.
    pub grown: usize,
}

impl MetricsRecord {
    pub fn current_task_accuracy(&self) -> f64 {
        self.task_accuracies.last().copied().unwrap_or(f64::NAN)
    }
}

/// One growth attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthEvent {
    pub task: usize,
    pub epoch: usize,
    pub global_epoch: usize,
    /// 0-based hidden layer index.
    pub layer: usize,
    pub k: usize,
    pub width_after: usize,
    pub param_count_after: usize,
    pub phi: Option<f64>,
    pub phi0: Option<f64>,
    pub fisher_percentile: Option<f64>,
    pub tau: Option<f64>,
    pub ed_saturated: Option<bool>,
    pub fisher_saturated: Option<bool>,
    /// `grown` or `refused: <reason>`.
    pub outcome: String,
}

/// Final state of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub mode: String,
    pub benchmark: String,
    pub status: String,
    pub error: Option<String>,
    pub final_avg_accuracy: f64,
    pub final_task_accuracies: Vec<f64>,
    pub final_param_count: usize,
    pub initial_param_count: usize,
    pub final_widths: Vec<usize>,
    pub initial_widths: Vec<usize>,
    pub final_n_eff_plastic: f64,
    pub growth_events: usize,
}

impl RunSummary {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Everything one seed produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<MetricsRecord>,
    pub events: Vec<GrowthEvent>,
    pub summary: RunSummary,
}

/// Hex SHA-256 of a value's JSON encoding.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value).map_err(|e| Error::invalid(format!("hashing config: {e}")))?;
    let digest = Sha256::digest(&json);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub const METRICS_COLUMNS: [&str; 13] = [
    "task",
    "epoch",
    "global_epoch",
    "avg_accuracy",
    "current_task_accuracy",
    "task_accuracies",
    "param_count",
    "widths",
    "ed",
    "locked_fraction",
    "n_eff_plastic",
    "train_loss",
    "grown",
];

pub const EVENT_COLUMNS: [&str; 14] = [
    "task",
    "epoch",
    "global_epoch",
    "layer",
    "k",
    "width_after",
    "param_count_after",
    "phi",
    "phi0",
    "fisher_percentile",
    "tau",
    "ed_saturated",
    "fisher_saturated",
    "outcome",
];

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

/// Writes `metrics.csv`, `growth_events.csv` and `summary.json` into
/// `out_dir`, creating it if needed.
pub fn emit_records(log: &RunLog, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let path = out_dir.join("metrics.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(METRICS_COLUMNS).map_err(|e| csv_err(&path, e))?;
    for r in &log.records {
        w.write_record([
            r.task.to_string(),
            r.epoch.to_string(),
            r.global_epoch.to_string(),
            r.avg_accuracy.to_string(),
            r.current_task_accuracy().to_string(),
            join(&r.task_accuracies),
            r.param_count.to_string(),
            join(&r.widths),
            join(&r.ed),
            join(&r.locked_fraction),
            r.n_eff_plastic.to_string(),
            r.train_loss.to_string(),
            r.grown.to_string(),
        ])
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out_dir.join("growth_events.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(EVENT_COLUMNS).map_err(|e| csv_err(&path, e))?;
    for g in &log.events {
        w.write_record([
            g.task.to_string(),
            g.epoch.to_string(),
            g.global_epoch.to_string(),
            g.layer.to_string(),
            g.k.to_string(),
            g.width_after.to_string(),
            g.param_count_after.to_string(),
            opt(&g.phi),
            opt(&g.phi0),
            opt(&g.fisher_percentile),
            opt(&g.tau),
            opt(&g.ed_saturated),
            opt(&g.fisher_saturated),
            g.outcome.clone(),
        ])
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&log.summary)
        .map_err(|e| Error::invalid(format!("serializing summary: {e}")))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}
