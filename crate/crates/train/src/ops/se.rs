//! Squeeze-and-excitation channel gating.

use rand::Rng;
use walshnet_core::{Dims4, Factor, Tensor4};

use crate::error::{Result, TrainError};
use crate::ops::activation::sigmoid;
use crate::param::{join, Param, ParamRole, ParamView};
use crate::real::{gemm, Operand, Real};

/// Number of hidden units for `channels` scaled by `ratio`; the product must
/// be a positive integer.
pub fn reduced_channels(channels: usize, ratio: Factor) -> Result<usize> {
    let hidden = ratio * Factor::from_integer(channels);
    if !hidden.is_integer() || hidden.to_integer() == 0 {
        return Err(TrainError::Model(format!(
            "squeeze ratio {ratio} of {channels} channels is not a positive integer"
        )));
    }
    Ok(hidden.to_integer())
}

/// `y = x * sigmoid(W2 relu(W1 gap(x) + b1) + b2)` per channel.
#[derive(Debug, Clone)]
pub struct SqueezeExcite<S> {
    pub channels: usize,
    pub hidden: usize,
    pub w1: Param<S>,
    pub b1: Param<S>,
    pub w2: Param<S>,
    pub b2: Param<S>,
}

#[derive(Debug, Clone)]
pub struct SeTape<S> {
    input: Tensor4<S>,
    pooled: Vec<S>,
    hidden: Vec<S>,
    gate: Vec<S>,
}

impl<S: Real> SqueezeExcite<S> {
    pub fn new<R: Rng + ?Sized>(channels: usize, ratio: Factor, rng: &mut R) -> Result<Self> {
        let hidden = reduced_channels(channels, ratio)?;
        Ok(Self {
            channels,
            hidden,
            w1: Param::kaiming(&[channels, hidden], channels, rng),
            b1: Param::zeros(&[hidden]),
            w2: Param::kaiming(&[hidden, channels], hidden, rng),
            b2: Param::zeros(&[channels]),
        })
    }

    pub fn param_count(&self) -> usize {
        2 * self.channels * self.hidden + self.hidden + self.channels
    }

    pub fn forward(&self, x: &Tensor4<S>) -> Result<(Tensor4<S>, SeTape<S>)> {
        let d = x.dims();
        if d.c != self.channels {
            return Err(TrainError::Model(format!("squeeze-excite expects {} channels, got {d}", self.channels)));
        }
        let (c, r, n) = (self.channels, self.hidden, d.n);
        let pooled = super::pool::gap_forward(x).into_vec();
        let mut hidden = vec![S::zero(); n * r];
        gemm(n, c, r, Operand::new(&pooled), Operand::new(&self.w1.value), &mut hidden, false);
        for row in hidden.chunks_exact_mut(r) {
            for (h, &b) in row.iter_mut().zip(&self.b1.value) {
                *h = (*h + b).max(S::zero());
            }
        }
        let mut gate = vec![S::zero(); n * c];
        gemm(n, r, c, Operand::new(&hidden), Operand::new(&self.w2.value), &mut gate, false);
        for row in gate.chunks_exact_mut(c) {
            for (g, &b) in row.iter_mut().zip(&self.b2.value) {
                *g = sigmoid(*g + b);
            }
        }
        let mut y = x.clone();
        for b in 0..n {
            let g = &gate[b * c..(b + 1) * c];
            for fiber in y.item_mut(b).chunks_exact_mut(c) {
                for (v, &s) in fiber.iter_mut().zip(g) {
                    *v = *v * s;
                }
            }
        }
        Ok((y, SeTape { input: x.clone(), pooled, hidden, gate }))
    }

    pub fn backward(&mut self, tape: &SeTape<S>, dy: &Tensor4<S>) -> Result<Tensor4<S>> {
        let d = tape.input.dims();
        if dy.dims() != d {
            return Err(TrainError::Model("squeeze-excite gradient shape mismatch".into()));
        }
        let (c, r, n) = (self.channels, self.hidden, d.n);
        let mut dx = dy.clone();
        let mut d_gate = vec![S::zero(); n * c];
        for b in 0..n {
            let g = &tape.gate[b * c..(b + 1) * c];
            let dg = &mut d_gate[b * c..(b + 1) * c];
            for (fx, fdy) in tape.input.item(b).chunks_exact(c).zip(dy.item(b).chunks_exact(c)) {
                for ch in 0..c {
                    dg[ch] = dg[ch] + fx[ch] * fdy[ch];
                }
            }
            for fiber in dx.item_mut(b).chunks_exact_mut(c) {
                for (v, &s) in fiber.iter_mut().zip(g) {
                    *v = *v * s;
                }
            }
        }
        // Through the sigmoid.
        let mut d_pre2 = d_gate;
        for (dp, &s) in d_pre2.iter_mut().zip(&tape.gate) {
            *dp = *dp * s * (S::one() - s);
        }
        gemm(r, n, c, Operand::t(&tape.hidden), Operand::new(&d_pre2), &mut self.w2.grad, true);
        for row in d_pre2.chunks_exact(c) {
            for (g, &v) in self.b2.grad.iter_mut().zip(row) {
                *g = *g + v;
            }
        }
        let mut d_hidden = vec![S::zero(); n * r];
        gemm(n, c, r, Operand::new(&d_pre2), Operand::t(&self.w2.value), &mut d_hidden, false);
        for (dh, &h) in d_hidden.iter_mut().zip(&tape.hidden) {
            if h <= S::zero() {
                *dh = S::zero();
            }
        }
        gemm(c, n, r, Operand::t(&tape.pooled), Operand::new(&d_hidden), &mut self.w1.grad, true);
        for row in d_hidden.chunks_exact(r) {
            for (g, &v) in self.b1.grad.iter_mut().zip(row) {
                *g = *g + v;
            }
        }
        let mut d_pooled = vec![S::zero(); n * c];
        gemm(n, r, c, Operand::new(&d_hidden), Operand::t(&self.w1.value), &mut d_pooled, false);
        let d_pooled = Tensor4::from_vec(Dims4::new(n, 1, 1, c), d_pooled)?;
        dx.add_assign(&super::pool::gap_backward(d, &d_pooled));
        Ok(dx)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_, S>)) {
        f(self.w1.view(join(prefix, "w1"), ParamRole::Trainable));
        f(self.b1.view(join(prefix, "b1"), ParamRole::Trainable));
        f(self.w2.view(join(prefix, "w2"), ParamRole::Trainable));
        f(self.b2.view(join(prefix, "b2"), ParamRole::Trainable));
    }
}
