//! Gradient-descent optimizers and learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};
use crate::model::Model;
use crate::param::ParamRole;
use crate::real::Real;

fn default_lr() -> f64 {
    1e-3
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

fn default_momentum() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        #[serde(default = "default_lr")]
        lr: f64,
        #[serde(default = "default_momentum")]
        momentum: f64,
    },
    Adam {
        #[serde(default = "default_lr")]
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }
}

impl OptimizerConfig {
    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr, .. } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::Sgd { lr, momentum } => lr > 0.0 && (0.0..1.0).contains(&momentum),
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                epsilon,
            } => lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(TrainError::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Learning rate as a function of the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Multiply by `gamma` every `every` epochs.
    Step { every: usize, gamma: f64 },
    /// Cosine decay from the base rate to `min_lr` over the run.
    Cosine { min_lr: f64 },
}

impl LrSchedule {
    pub fn rate(&self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Step { every, gamma } => base * gamma.powi((epoch / every.max(1)) as i32),
            LrSchedule::Cosine { min_lr } => {
                let progress = if epochs <= 1 { 0.0 } else { epoch as f64 / (epochs - 1) as f64 };
                min_lr + 0.5 * (base - min_lr) * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LrSchedule::Constant => true,
            LrSchedule::Step { every, gamma } => every > 0 && gamma > 0.0,
            LrSchedule::Cosine { min_lr } => min_lr >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(TrainError::Config(format!("invalid schedule {self:?}")))
        }
    }
}

/// Optimizer with per-tensor state keyed by visiting order.
#[derive(Debug, Clone)]
pub struct Optimizer<S> {
    config: OptimizerConfig,
    clamp_non_negative: bool,
    step: u64,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
}

impl<S: Real> Optimizer<S> {
    pub fn new(config: OptimizerConfig, clamp_non_negative: bool) -> Self {
        Self {
            config,
            clamp_non_negative,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update with learning rate `lr` to every trainable,
    /// unfrozen element, then clamps non-negative tensors.
    pub fn step(&mut self, model: &mut Model<S>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let config = self.config;
        let clamp = self.clamp_non_negative;
        let (first, second) = (&mut self.first, &mut self.second);
        let mut k = 0;
        model.visit_params(&mut |view| {
            if !view.role.is_trainable() {
                return;
            }
            if first.len() <= k {
                first.push(vec![S::zero(); view.value.len()]);
                second.push(vec![S::zero(); view.value.len()]);
            }
            let (m, v) = (&mut first[k], &mut second[k]);
            k += 1;
            match config {
                OptimizerConfig::Sgd { momentum, .. } => {
                    let mu = S::from_f64_lossy(momentum);
                    let rate = S::from_f64_lossy(lr);
                    for i in 0..view.value.len() {
                        if view.is_frozen(i) {
                            continue;
                        }
                        m[i] = mu * m[i] + view.grad[i];
                        view.value[i] = view.value[i] - rate * m[i];
                    }
                }
                OptimizerConfig::Adam {
                    beta1, beta2, epsilon, ..
                } => {
                    let (b1, b2) = (S::from_f64_lossy(beta1), S::from_f64_lossy(beta2));
                    let c1 = S::from_f64_lossy(1.0 - beta1.powi(t));
                    let c2 = S::from_f64_lossy(1.0 - beta2.powi(t));
                    let rate = S::from_f64_lossy(lr);
                    let eps = S::from_f64_lossy(epsilon);
                    for i in 0..view.value.len() {
                        if view.is_frozen(i) {
                            continue;
                        }
                        let g = view.grad[i];
                        m[i] = b1 * m[i] + (S::one() - b1) * g;
                        v[i] = b2 * v[i] + (S::one() - b2) * g * g;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        view.value[i] = view.value[i] - rate * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            if clamp && view.role == ParamRole::NonNegative {
                for x in view.value.iter_mut() {
                    if *x < S::zero() {
                        *x = S::zero();
                    }
                }
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{presets, InputShape, LayerSpec, ModelSpec};
    use walshnet_core::{Precision, Tensor4};

    fn tiny() -> Model<f64> {
        Model::new(ModelSpec {
            input: InputShape {
                width: 1,
                height: 1,
                channels: 2,
            },
            classes: 2,
            seed: 3,
            precision: Precision::F64,
            layers: vec![LayerSpec::dense(2)],
        })
        .unwrap()
    }

    fn set_grads(model: &mut Model<f64>, g: f64) {
        model.visit_params(&mut |v| v.grad.fill(g));
    }

    fn values(model: &mut Model<f64>) -> Vec<f64> {
        let mut out = Vec::new();
        model.visit_params(&mut |v| out.extend_from_slice(v.value));
        out
    }

    #[test]
    fn sgd_without_momentum_is_plain_descent() {
        let mut model = tiny();
        let before = values(&mut model);
        set_grads(&mut model, 2.0);
        let mut opt = Optimizer::new(OptimizerConfig::Sgd { lr: 0.1, momentum: 0.0 }, true);
        opt.step(&mut model, 0.1);
        for (a, b) in values(&mut model).iter().zip(&before) {
            assert!((a - (b - 0.2)).abs() < 1e-15);
        }
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut model = tiny();
        let before = values(&mut model);
        set_grads(&mut model, -5.0);
        let mut opt = Optimizer::new(OptimizerConfig::default(), true);
        opt.step(&mut model, 1e-3);
        for (a, b) in values(&mut model).iter().zip(&before) {
            assert!((a - b - 1e-3).abs() < 1e-9);
        }
    }

    #[test]
    fn frozen_and_statistics_are_untouched_and_weights_clamped() {
        let mut model = Model::<f64>::new(presets::mnist_fwht2d_gap()).unwrap();
        let mut before = Vec::new();
        model.visit_params(&mut |v| before.push(v.value.to_vec()));
        model.visit_params(&mut |v| v.grad.fill(1e3));
        let mut opt = Optimizer::new(OptimizerConfig::Sgd { lr: 1.0, momentum: 0.0 }, true);
        opt.step(&mut model, 1.0);
        let mut k = 0;
        model.visit_params(&mut |v| {
            let old = &before[k];
            k += 1;
            for i in 0..v.value.len() {
                if v.role == ParamRole::Statistic || v.is_frozen(i) {
                    assert_eq!(v.value[i], old[i], "{}", v.name);
                }
                if v.role == ParamRole::NonNegative {
                    assert_eq!(v.value[i], 0.0);
                }
            }
        });
    }

    #[test]
    fn schedules() {
        assert_eq!(LrSchedule::Constant.rate(0.1, 7, 10), 0.1);
        let step = LrSchedule::Step { every: 2, gamma: 0.5 };
        assert_eq!(step.rate(1.0, 3, 10), 0.5);
        assert_eq!(step.rate(1.0, 4, 10), 0.25);
        let cos = LrSchedule::Cosine { min_lr: 0.0 };
        assert!((cos.rate(1.0, 0, 5) - 1.0).abs() < 1e-15);
        assert!(cos.rate(1.0, 4, 5).abs() < 1e-15);
        assert!(LrSchedule::Step { every: 0, gamma: 0.5 }.validate().is_err());
    }

    #[test]
    fn training_reduces_loss_on_fixed_batch() {
        let mut model = tiny();
        let x = Tensor4::from_f64(walshnet_core::Dims4::new(2, 1, 1, 2), &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let labels = [1, 0];
        let mut opt = Optimizer::new(OptimizerConfig::default(), true);
        let loss = |m: &Model<f64>| crate::ops::softmax_cross_entropy(&m.predict(&x).unwrap(), &labels).unwrap().loss;
        let start = loss(&model);
        for _ in 0..200 {
            model.zero_grad();
            let (y, tape) = model.forward_train(&x).unwrap();
            let out = crate::ops::softmax_cross_entropy(&y, &labels).unwrap();
            model.backward(&tape, &out.grad).unwrap();
            opt.step(&mut model, 1e-2);
        }
        assert!(loss(&model) < 0.5 * start);
    }
}
