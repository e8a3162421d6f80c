//! Per-epoch metrics CSV and the run summary record.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Result, TrainError};
use crate::trainer::EpochRecord;

/// Version of the metrics CSV and summary layouts.
pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str = "schema_version,epoch,lr,train_loss,train_accuracy,test_loss,test_accuracy,seconds";

/// Final record of one training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub schema_version: u32,
    pub name: String,
    pub precision: String,
    pub seed: u64,
    pub threads: usize,
    pub epochs: usize,
    pub steps: u64,
    pub final_train_loss: f64,
    pub final_train_accuracy: f64,
    pub final_test_loss: f64,
    pub final_test_accuracy: f64,
    pub trainable_params: usize,
    pub non_trainable_params: usize,
    /// `1 - wht / conv` over all WHT layers, against the convolutions they
    /// stand in for.
    pub replaced_layer_reduction: Option<f64>,
    pub baseline_trainable_params: Option<usize>,
    /// `1 - trainable / baseline_trainable`.
    pub params_reduction_ratio: Option<f64>,
    pub wall_clock_seconds: f64,
}

pub fn metrics_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{SCHEMA_VERSION},{},{},{},{},{},{},{:.3}",
            r.epoch, r.lr, r.train_loss, r.train_accuracy, r.test_loss, r.test_accuracy, r.seconds
        )
        .expect("writing to a string");
    }
    out
}

pub fn summary_json(summary: &TrainSummary) -> String {
    serde_json::to_string_pretty(summary).expect("summary serializes")
}

/// Writes `text` to `path`, replacing any previous file.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| TrainError::io(path, e))
}
