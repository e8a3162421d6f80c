//! Minibatch training loop and evaluation.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, TrainError};
use crate::model::Model;
use crate::ops::softmax_cross_entropy;
use crate::optim::{LrSchedule, Optimizer, OptimizerConfig};
use crate::param::ParamRole;
use crate::real::Real;

fn default_batch() -> usize {
    128
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub schedule: LrSchedule,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds the per-epoch shuffles (epoch `e` uses `seed + e`).
    #[serde(default)]
    pub seed: u64,
    /// Clamp non-negative parameters (the threshold weights) after each step.
    #[serde(default = "yes")]
    pub clamp_weights: bool,
}

impl TrainConfig {
    pub fn new(epochs: usize) -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            schedule: LrSchedule::Constant,
            batch_size: default_batch(),
            epochs,
            seed: 0,
            clamp_weights: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(TrainError::Config("batch size and epochs must be positive".into()));
        }
        self.optimizer.validate()?;
        self.schedule.validate()
    }
}

/// Metrics of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochRecord>,
    pub steps: u64,
    pub wall_clock_seconds: f64,
    /// Smallest non-negative-role parameter seen after any optimizer step.
    pub min_constrained_value: Option<f64>,
}

impl TrainOutcome {
    pub fn final_epoch(&self) -> &EpochRecord {
        self.epochs.last().expect("at least one epoch")
    }
}

/// Mean loss and accuracy over a dataset in evaluation mode.
pub fn evaluate<S: Real>(model: &Model<S>, data: &Dataset, batch_size: usize) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(TrainError::Config("empty evaluation set".into()));
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut loss = 0.0;
    let mut correct = 0;
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, labels) = data.batch::<S>(chunk);
        let out = softmax_cross_entropy(&model.predict(&x)?, &labels)?;
        loss += out.loss * chunk.len() as f64;
        correct += out.correct;
    }
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
}

fn min_constrained<S: Real>(model: &mut Model<S>) -> Option<f64> {
    let mut min: Option<f64> = None;
    model.visit_params(&mut |v| {
        if v.role == ParamRole::NonNegative {
            for &x in v.value.iter() {
                let x = x.to_f64_lossy();
                min = Some(min.map_or(x, |m| m.min(x)));
            }
        }
    });
    min
}

/// Trains `model` in place, calling `on_epoch` after each epoch.
pub fn train<S: Real>(
    model: &mut Model<S>,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Config("empty training set".into()));
    }
    let start = Instant::now();
    let mut optimizer = Optimizer::<S>::new(cfg.optimizer, cfg.clamp_weights);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut min_constrained_value: Option<f64> = None;
    for epoch in 0..cfg.epochs {
        let epoch_start = Instant::now();
        let lr = cfg.schedule.rate(cfg.optimizer.lr(), epoch, cfg.epochs);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64)));
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, labels) = train_set.batch::<S>(chunk);
            model.zero_grad();
            let (logits, tape) = model.forward_train(&x)?;
            let out = softmax_cross_entropy(&logits, &labels)?;
            if !out.loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    step,
                    loss: out.loss,
                });
            }
            model.backward(&tape, &out.grad)?;
            optimizer.step(model, lr);
            if let Some(m) = min_constrained(model) {
                min_constrained_value = Some(min_constrained_value.map_or(m, |p| p.min(m)));
            }
            loss_sum += out.loss * chunk.len() as f64;
            correct += out.correct;
        }
        let (test_loss, test_accuracy) = evaluate(model, test_set, cfg.batch_size.max(256))?;
        let record = EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            test_loss,
            test_accuracy,
            seconds: epoch_start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        records.push(record);
    }
    Ok(TrainOutcome {
        epochs: records,
        steps: optimizer.steps(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        min_constrained_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic, SyntheticConfig};
    use crate::model::{presets, InputShape};

    fn xor_data() -> Dataset {
        Dataset::new(
            InputShape {
                width: 1,
                height: 1,
                channels: 2,
            },
            2,
            vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0],
            vec![0, 1, 1, 0],
        )
        .unwrap()
    }

    #[test]
    fn xor_reaches_full_accuracy() {
        let data = xor_data();
        let mut model = Model::<f64>::new(presets::xor()).unwrap();
        let mut cfg = TrainConfig::new(2000);
        cfg.batch_size = 4;
        cfg.optimizer = OptimizerConfig::Adam {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        };
        let out = train(&mut model, &data, &data, &cfg, |_| {}).unwrap();
        assert!(out.steps <= 2000);
        assert_eq!(out.final_epoch().train_accuracy, 1.0);
        assert_eq!(out.final_epoch().test_accuracy, 1.0);
    }

    #[test]
    fn divergence_is_reported() {
        let data = xor_data();
        let mut model = Model::<f64>::new(presets::xor()).unwrap();
        model.visit_params(&mut |v| v.value.fill(f64::NAN));
        let err = train(&mut model, &data, &data, &TrainConfig::new(1), |_| {}).unwrap_err();
        assert!(matches!(err, TrainError::Diverged { epoch: 0, step: 0, .. }));
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let data = synthetic(&SyntheticConfig {
            classes: 3,
            width: 4,
            height: 4,
            channels: 2,
            count: 60,
            noise: 0.2,
            seed: 4,
        })
        .unwrap();
        let spec = crate::model::ModelSpec {
            input: data.shape,
            classes: 3,
            seed: 1,
            precision: walshnet_core::Precision::F64,
            layers: vec![
                crate::model::LayerSpec::conv(4, 3, 1, false),
                crate::model::LayerSpec::BatchNorm,
                crate::model::LayerSpec::Relu,
                crate::model::LayerSpec::fwht_2d(true, true),
                crate::model::LayerSpec::Gap,
                crate::model::LayerSpec::dense(3),
            ],
        };
        let mut cfg = TrainConfig::new(2);
        cfg.batch_size = 16;
        let run = || {
            let mut m = Model::<f64>::new(spec.clone()).unwrap();
            let out = train(&mut m, &data, &data, &cfg, |_| {}).unwrap();
            assert!(out.min_constrained_value.unwrap() >= 0.0);
            crate::checkpoint::Checkpoint::from_model(&mut m, "").encode()
        };
        assert_eq!(run(), run());
    }
}
