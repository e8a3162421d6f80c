//! Batch normalization over the channel axis.

use walshnet_core::Tensor4;

use crate::error::{Result, TrainError};
use crate::param::{join, Param, ParamRole, ParamView};
use crate::real::Real;

pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the previous running statistic in each update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch normalization. `gamma` and `beta` are trainable; the
/// running mean and variance are statistics used in evaluation mode.
#[derive(Debug, Clone)]
pub struct BatchNorm<S> {
    pub channels: usize,
    pub gamma: Param<S>,
    pub beta: Param<S>,
    pub running_mean: Param<S>,
    pub running_var: Param<S>,
}

/// Normalized input and inverse standard deviation of a training-mode pass.
#[derive(Debug, Clone)]
pub struct BatchNormTape<S> {
    normalized: Tensor4<S>,
    inv_std: Vec<S>,
}

impl<S: Real> BatchNorm<S> {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::filled(&[channels], S::one()),
            beta: Param::zeros(&[channels]),
            running_mean: Param::zeros(&[channels]),
            running_var: Param::filled(&[channels], S::one()),
        }
    }

    fn check(&self, x: &Tensor4<S>) -> Result<()> {
        if x.dims().c != self.channels {
            return Err(TrainError::Model(format!(
                "batch norm expects {} channels, got {}",
                self.channels,
                x.dims()
            )));
        }
        Ok(())
    }

    /// Normalizes with batch statistics and updates the running statistics.
    pub fn forward_train(&mut self, x: &Tensor4<S>) -> Result<(Tensor4<S>, BatchNormTape<S>)> {
        self.check(x)?;
        let c = self.channels;
        let count = x.dims().n * x.dims().pixels();
        if count == 0 {
            return Err(TrainError::Model("batch norm on an empty batch".into()));
        }
        let inv_count = S::from_usize_lossy(count).recip();
        let mut mean = vec![S::zero(); c];
        for fiber in x.fibers() {
            for (m, &v) in mean.iter_mut().zip(fiber) {
                *m = *m + v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m * inv_count);
        let mut var = vec![S::zero(); c];
        for fiber in x.fibers() {
            for ((s, &v), &m) in var.iter_mut().zip(fiber).zip(&mean) {
                *s = *s + (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s = *s * inv_count);
        let eps = S::from_f64_lossy(BN_EPSILON);
        let inv_std: Vec<S> = var.iter().map(|&v| (v + eps).sqrt().recip()).collect();

        let mut normalized = Tensor4::zeros(x.dims());
        let mut y = Tensor4::zeros(x.dims());
        for ((fin, fnorm), fout) in x.fibers().zip(normalized.fibers_mut()).zip(y.fibers_mut()) {
            for ch in 0..c {
                let xh = (fin[ch] - mean[ch]) * inv_std[ch];
                fnorm[ch] = xh;
                fout[ch] = self.gamma.value[ch] * xh + self.beta.value[ch];
            }
        }

        let mom = S::from_f64_lossy(BN_MOMENTUM);
        let rest = S::one() - mom;
        for ch in 0..c {
            self.running_mean.value[ch] = mom * self.running_mean.value[ch] + rest * mean[ch];
            self.running_var.value[ch] = mom * self.running_var.value[ch] + rest * var[ch];
        }
        Ok((y, BatchNormTape { normalized, inv_std }))
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, x: &Tensor4<S>) -> Result<Tensor4<S>> {
        self.check(x)?;
        let eps = S::from_f64_lossy(BN_EPSILON);
        let scale: Vec<S> = (0..self.channels)
            .map(|ch| self.gamma.value[ch] / (self.running_var.value[ch] + eps).sqrt())
            .collect();
        let mut y = x.clone();
        for fiber in y.fibers_mut() {
            for ch in 0..self.channels {
                fiber[ch] = (fiber[ch] - self.running_mean.value[ch]) * scale[ch] + self.beta.value[ch];
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, tape: &BatchNormTape<S>, dy: &Tensor4<S>) -> Result<Tensor4<S>> {
        if dy.dims() != tape.normalized.dims() {
            return Err(TrainError::Model("batch norm gradient shape mismatch".into()));
        }
        let c = self.channels;
        let count = S::from_usize_lossy(dy.dims().n * dy.dims().pixels());
        let mut sum_g = vec![S::zero(); c];
        let mut sum_gx = vec![S::zero(); c];
        for (g, xh) in dy.fibers().zip(tape.normalized.fibers()) {
            for ch in 0..c {
                sum_g[ch] = sum_g[ch] + g[ch];
                sum_gx[ch] = sum_gx[ch] + g[ch] * xh[ch];
            }
        }
        for ch in 0..c {
            self.beta.grad[ch] = self.beta.grad[ch] + sum_g[ch];
            self.gamma.grad[ch] = self.gamma.grad[ch] + sum_gx[ch];
        }
        let mut dx = Tensor4::zeros(dy.dims());
        for ((g, xh), out) in dy.fibers().zip(tape.normalized.fibers()).zip(dx.fibers_mut()) {
            for ch in 0..c {
                let k = self.gamma.value[ch] * tape.inv_std[ch] / count;
                out[ch] = k * (count * g[ch] - sum_g[ch] - xh[ch] * sum_gx[ch]);
            }
        }
        Ok(dx)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_, S>)) {
        f(self.gamma.view(join(prefix, "gamma"), ParamRole::Trainable));
        f(self.beta.view(join(prefix, "beta"), ParamRole::Trainable));
        f(self.running_mean.view(join(prefix, "running_mean"), ParamRole::Statistic));
        f(self.running_var.view(join(prefix, "running_var"), ParamRole::Statistic));
    }
}
