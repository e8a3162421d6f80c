//! Experiment configs: one TOML document fixing model, data and training.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walshnet_core::Precision;

use crate::checkpoint::Checkpoint;
use crate::data::{check_compatible, DatasetConfig};
use crate::error::{Result, TrainError};
use crate::model::{presets, Model, ModelSpec};
use crate::real::Real;
use crate::report::{metrics_csv, summary_json, write_text, TrainSummary, SCHEMA_VERSION};
use crate::trainer::{train, EpochRecord, TrainConfig};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

/// A model given either by preset name or in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Preset {
        preset: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        precision: Option<Precision>,
    },
    Spec(ModelSpec),
}

impl ModelSource {
    /// Resolves to a full spec. Presets take their initialization seed from
    /// `seed`.
    pub fn resolve(&self, seed: u64) -> Result<ModelSpec> {
        Ok(match self {
            ModelSource::Preset { preset, precision } => {
                let mut spec = presets::by_name(preset)?;
                spec.seed = seed;
                if let Some(p) = precision {
                    spec.precision = *p;
                }
                spec
            }
            ModelSource::Spec(spec) => spec.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelSource,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    /// Reference model for `params_reduction_ratio`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<ModelSource>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| TrainError::Config(e.message().to_string()))
    }

    /// Reads a config and makes dataset paths relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            TrainError::Config(msg) => TrainError::format(path, msg),
            other => other,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.dataset.resolve(&base);
        Ok(cfg)
    }

    /// Replaces the run seed (shuffling and preset initialization).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        if let ModelSource::Spec(spec) = &mut self.model {
            spec.seed = seed;
        }
        self
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        self.model.resolve(self.train.seed)
    }

    /// Text stored in checkpoints: the model and training settings.
    pub fn config_echo(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Echo<'a> {
            model: ModelSpec,
            train: &'a TrainConfig,
        }
        serde_json::to_string(&Echo {
            model: self.model_spec()?,
            train: &self.train,
        })
        .map_err(|e| TrainError::Config(e.to_string()))
    }
}

/// Output of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub summary: TrainSummary,
    pub epochs: Vec<EpochRecord>,
}

/// Loads the data, builds and trains the model, and writes the metrics CSV,
/// the summary JSON and the checkpoint into `out` (when given).
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    threads: usize,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<ExperimentResult> {
    let spec = cfg.model_spec()?;
    match spec.precision {
        Precision::F32 => run_typed::<f32>(cfg, spec, out, threads, on_epoch),
        Precision::F64 => run_typed::<f64>(cfg, spec, out, threads, on_epoch),
    }
}

fn run_typed<S: Real>(
    cfg: &ExperimentConfig,
    spec: ModelSpec,
    out: Option<&Path>,
    threads: usize,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<ExperimentResult> {
    let (train_set, test_set) = cfg.dataset.load()?;
    check_compatible(&train_set, spec.input, spec.classes)?;
    let mut model = Model::<S>::new(spec)?;
    let outcome = train(&mut model, &train_set, &test_set, &cfg.train, on_epoch)?;
    let totals = model.param_totals();
    let wht = model.wht_param_counts();
    let replaced_layer_reduction = (!wht.is_empty()).then(|| {
        let kept: usize = wht.iter().map(|c| c.trainable).sum();
        let conv: usize = wht.iter().map(|c| c.comparison_conv).sum();
        1.0 - kept as f64 / conv as f64
    });
    let baseline_trainable_params = match &cfg.baseline {
        Some(src) => Some(Model::<S>::new(src.resolve(cfg.train.seed)?)?.param_totals().trainable),
        None => None,
    };
    let last = outcome.final_epoch();
    let summary = TrainSummary {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        precision: S::NAME.to_string(),
        seed: cfg.train.seed,
        threads,
        epochs: cfg.train.epochs,
        steps: outcome.steps,
        final_train_loss: last.train_loss,
        final_train_accuracy: last.train_accuracy,
        final_test_loss: last.test_loss,
        final_test_accuracy: last.test_accuracy,
        trainable_params: totals.trainable,
        non_trainable_params: totals.non_trainable,
        replaced_layer_reduction,
        baseline_trainable_params,
        params_reduction_ratio: baseline_trainable_params.map(|b| 1.0 - totals.trainable as f64 / b as f64),
        wall_clock_seconds: outcome.wall_clock_seconds,
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
        write_text(&dir.join(METRICS_FILE), &metrics_csv(&outcome.epochs))?;
        write_text(&dir.join(SUMMARY_FILE), &(summary_json(&summary) + "\n"))?;
        Checkpoint::from_model(&mut model, cfg.config_echo()?).save(&dir.join(CHECKPOINT_FILE))?;
    }
    Ok(ExperimentResult {
        summary,
        epochs: outcome.epochs,
    })
}

/// Paths of the files written by [`run_experiment`].
pub fn output_files(dir: &Path) -> [PathBuf; 3] {
    [dir.join(METRICS_FILE), dir.join(SUMMARY_FILE), dir.join(CHECKPOINT_FILE)]
}
