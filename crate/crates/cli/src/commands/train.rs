//! `walshnet train`: runs an experiment config and writes its metrics,
//! summary and checkpoint.

use std::path::{Path, PathBuf};

use walshnet_train::{run_experiment, EpochRecord, ExperimentConfig, TrainSummary};

use crate::error::{CliError, Result};
use crate::output::{render, Format};

/// Output directory used when `--out` is absent.
pub fn default_out_dir(name: &str) -> PathBuf {
    Path::new("runs").join(name)
}

fn progress(record: &EpochRecord, epochs: usize) -> String {
    format!(
        "epoch {}/{epochs}  lr {:.3e}  train loss {:.4} acc {:.4}  test loss {:.4} acc {:.4}  ({:.1}s)",
        record.epoch,
        record.lr,
        record.train_loss,
        record.train_accuracy,
        record.test_loss,
        record.test_accuracy,
        record.seconds
    )
}

/// The summary as `key  value` lines.
fn human_summary(summary: &TrainSummary) -> String {
    let value = serde_json::to_value(summary).expect("summary serializes");
    let map = value.as_object().expect("summary is a record");
    let width = map.keys().map(String::len).max().unwrap_or(0);
    map.iter()
        .map(|(k, v)| {
            let v = match v {
                serde_json::Value::Null => "-".to_string(),
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            format!("{k:<width$}  {v}\n")
        })
        .collect()
}

pub fn run(config: Option<&Path>, seed: Option<u64>, out: Option<&Path>, threads: usize, format: Format) -> Result<()> {
    let path = config.ok_or_else(|| CliError::Usage("train needs --config".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        cfg = cfg.with_seed(seed);
    }
    let out_dir = out.map_or_else(|| default_out_dir(&cfg.name), Path::to_path_buf);
    let epochs = cfg.train.epochs;
    let result = run_experiment(&cfg, Some(&out_dir), threads, |r| eprintln!("{}", progress(r, epochs)))?;
    let text = match format {
        Format::Human => human_summary(&result.summary),
        other => render(other, &[&result.summary]),
    };
    print!("{text}");
    eprintln!("wrote {}", out_dir.display());
    Ok(())
}
