//! A WHT layer as a trainable node.

use rand::Rng;
use walshnet_core::{LayerConfig, Tensor4, WhtLayer, WhtTape};

use crate::error::Result;
use crate::param::{join, ParamRole, ParamView};
use crate::real::Real;

/// Wraps a [`WhtLayer`] with gradient buffers for its thresholds and weights.
#[derive(Debug, Clone)]
pub struct WhtNode<S> {
    pub layer: WhtLayer<S>,
    pub d_thresholds: Vec<S>,
    pub d_weights: Option<Vec<S>>,
    frozen: Vec<bool>,
}

impl<S: Real> WhtNode<S> {
    pub fn new<R: Rng + ?Sized>(config: LayerConfig, rng: &mut R) -> Result<Self> {
        Ok(Self::from_layer(WhtLayer::new(config, rng)?))
    }

    pub fn from_layer(layer: WhtLayer<S>) -> Self {
        let p = layer.params();
        let d_thresholds = vec![S::zero(); p.thresholds.len()];
        let d_weights = p.weights.as_ref().map(|w| vec![S::zero(); w.len()]);
        let frozen = layer.frozen_thresholds();
        Self { layer, d_thresholds, d_weights, frozen }
    }

    pub fn forward(&self, x: &Tensor4<S>) -> Result<(Tensor4<S>, WhtTape<S>)> {
        Ok(self.layer.forward(x)?)
    }

    pub fn backward(&mut self, tape: &WhtTape<S>, dy: &Tensor4<S>) -> Result<Tensor4<S>> {
        let (dx, grads) = self.layer.backward(tape, dy)?;
        for (acc, g) in self.d_thresholds.iter_mut().zip(grads.d_thresholds) {
            *acc = *acc + g;
        }
        if let (Some(acc), Some(g)) = (&mut self.d_weights, grads.d_weights) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a = *a + v;
            }
        }
        Ok(dx)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_, S>)) {
        let params = self.layer.params_mut();
        let len = params.thresholds.len();
        f(ParamView {
            name: join(prefix, "thresholds"),
            dims: vec![len],
            value: &mut params.thresholds,
            grad: &mut self.d_thresholds,
            frozen: Some(self.frozen.clone()),
            role: ParamRole::Trainable,
        });
        if let (Some(w), Some(g)) = (&mut params.weights, &mut self.d_weights) {
            f(ParamView {
                name: join(prefix, "weights"),
                dims: vec![w.len()],
                value: w,
                grad: g,
                frozen: None,
                role: ParamRole::NonNegative,
            });
        }
    }
}
