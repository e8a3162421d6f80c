//! Soft, smooth and weighted-smooth thresholding with analytic gradients.
//!
//! All gradients take the closed branch at the kink `|v x| = T`, i.e. they are
//! zero there.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WhtError};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

/// Lower and upper bound of the uniform initialization of AC thresholds.
pub const THRESHOLD_INIT_RANGE: (f64, f64) = (0.01, 0.1);

/// `sign(x) (|x| - T)_+`
#[inline]
pub fn soft_threshold<S: Scalar>(x: S, t: S) -> S {
    if x < -t {
        x + t
    } else if x > t {
        x - t
    } else {
        S::zero()
    }
}

/// `tanh(x) (|x| - T)_+`
#[inline]
pub fn smooth_threshold<S: Scalar>(x: S, t: S) -> S {
    let excess = x.abs() - t;
    if excess > S::zero() {
        x.tanh() * excess
    } else {
        S::zero()
    }
}

/// Derivative of [`smooth_threshold`] with respect to `T`.
#[inline]
pub fn smooth_threshold_grad_t<S: Scalar>(x: S, t: S) -> S {
    if x.abs() > t {
        -x.tanh()
    } else {
        S::zero()
    }
}

/// Derivative of [`smooth_threshold`] with respect to `x`:
/// `sech^2(x) (|x| - T) + tanh(x) sign(x)` outside the dead zone.
#[inline]
pub fn smooth_threshold_grad_x<S: Scalar>(x: S, t: S) -> S {
    let excess = x.abs() - t;
    if excess > S::zero() {
        let th = x.tanh();
        (S::one() - th * th) * excess + th * x.signum()
    } else {
        S::zero()
    }
}

/// `tanh(x) (|v x| - T)_+`; the weight does not enter the `tanh`.
pub fn weighted_smooth_threshold<S: Scalar>(x: S, t: S, v: S) -> Result<S> {
    check_weight(v)?;
    Ok(weighted_forward(x, t, v))
}

/// Partial derivatives of the weighted smooth threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedGrads<S> {
    pub d_v: S,
    pub d_t: S,
    pub d_x: S,
}

pub fn weighted_smooth_threshold_grads<S: Scalar>(x: S, t: S, v: S) -> Result<WeightedGrads<S>> {
    check_weight(v)?;
    Ok(weighted_grads(x, t, v))
}

fn check_weight<S: Scalar>(v: S) -> Result<()> {
    if v < S::zero() {
        return Err(WhtError::NegativeWeight(v.to_f64_lossy()));
    }
    Ok(())
}

#[inline]
fn weighted_forward<S: Scalar>(x: S, t: S, v: S) -> S {
    let excess = (v * x).abs() - t;
    if excess > S::zero() {
        x.tanh() * excess
    } else {
        S::zero()
    }
}

#[inline]
fn weighted_grads<S: Scalar>(x: S, t: S, v: S) -> WeightedGrads<S> {
    let excess = (v * x).abs() - t;
    if excess > S::zero() {
        let th = x.tanh();
        WeightedGrads {
            d_v: th * x.abs(),
            d_t: -th,
            d_x: (S::one() - th * th) * excess + th * v * x.signum(),
        }
    } else {
        WeightedGrads {
            d_v: S::zero(),
            d_t: S::zero(),
            d_x: S::zero(),
        }
    }
}

/// Axis along which one threshold vector is laid out; the remaining axes
/// share it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Broadcast {
    /// One parameter per channel, shared over batch and spatial positions.
    ChannelAxis,
    /// One parameter per `(x, y)` position, shared over batch and channels.
    SpatialAxes,
}

/// Trainable threshold state for one thresholding stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdParams<S> {
    /// Per-coefficient thresholds `T`.
    pub thresholds: Vec<S>,
    /// Optional per-coefficient multiplicative weights `v >= 0`.
    pub weights: Option<Vec<S>>,
    /// Coefficients that pass through unchanged (the DC slot).
    pub dc_mask: Vec<bool>,
}

impl<S: Scalar> ThresholdParams<S> {
    /// All thresholds zero, weights one, `dc` indices masked.
    pub fn zeros(len: usize, dc: &[usize], weighted: bool) -> Self {
        let mut dc_mask = vec![false; len];
        for &i in dc {
            dc_mask[i] = true;
        }
        Self {
            thresholds: vec![S::zero(); len],
            weights: weighted.then(|| vec![S::one(); len]),
            dc_mask,
        }
    }

    /// Seeded initialization: `T = 0` at masked slots, uniform in
    /// [`THRESHOLD_INIT_RANGE`] elsewhere, `v = 1`.
    pub fn initialized<R: Rng + ?Sized>(len: usize, dc: &[usize], weighted: bool, rng: &mut R) -> Self {
        let mut p = Self::zeros(len, dc, weighted);
        let (lo, hi) = THRESHOLD_INIT_RANGE;
        for (t, &masked) in p.thresholds.iter_mut().zip(&p.dc_mask) {
            if !masked {
                *t = S::from_f64_lossy(rng.random_range(lo..hi));
            }
        }
        p
    }

    /// Every threshold set to `t` (DC slots included).
    pub fn with_uniform_threshold(mut self, t: S) -> Self {
        self.thresholds.iter_mut().for_each(|v| *v = t);
        self
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.thresholds.len();
        if self.dc_mask.len() != n {
            return Err(WhtError::LengthMismatch {
                expected: n,
                actual: self.dc_mask.len(),
            });
        }
        if let Some(w) = &self.weights {
            if w.len() != n {
                return Err(WhtError::LengthMismatch {
                    expected: n,
                    actual: w.len(),
                });
            }
            if let Some(&bad) = w.iter().find(|&&v| v < S::zero()) {
                return Err(WhtError::NegativeWeight(bad.to_f64_lossy()));
            }
        }
        Ok(())
    }

    /// Projects the weights back onto `v >= 0`.
    pub fn enforce_constraints(&mut self) {
        if let Some(w) = &mut self.weights {
            for v in w.iter_mut() {
                if *v < S::zero() {
                    *v = S::zero();
                }
            }
        }
    }

    #[inline]
    fn weight(&self, i: usize) -> S {
        match &self.weights {
            Some(w) => w[i],
            None => S::one(),
        }
    }
}

/// Gradients of the loss with respect to a [`ThresholdParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrads<S> {
    pub d_thresholds: Vec<S>,
    pub d_weights: Option<Vec<S>>,
}

impl<S: Scalar> ThresholdGrads<S> {
    pub fn zeros_like(params: &ThresholdParams<S>) -> Self {
        Self {
            d_thresholds: vec![S::zero(); params.len()],
            d_weights: params.weights.as_ref().map(|w| vec![S::zero(); w.len()]),
        }
    }
}

/// Thresholds `x` into `out`. Element `i` uses parameter
/// `(i / lanes) % params.len()`.
pub fn threshold_slice<S: Scalar>(x: &[S], out: &mut [S], params: &ThresholdParams<S>, lanes: usize) {
    debug_assert_eq!(x.len(), out.len());
    let n = params.len();
    let group = n * lanes;
    for (xs, os) in x.chunks(group).zip(out.chunks_mut(group)) {
        for (p, (xl, ol)) in xs.chunks(lanes).zip(os.chunks_mut(lanes)).enumerate() {
            if params.dc_mask[p] {
                ol.copy_from_slice(xl);
                continue;
            }
            let t = params.thresholds[p];
            match &params.weights {
                None => {
                    for (o, &v) in ol.iter_mut().zip(xl) {
                        *o = smooth_threshold(v, t);
                    }
                }
                Some(w) => {
                    let wv = w[p];
                    for (o, &v) in ol.iter_mut().zip(xl) {
                        *o = weighted_forward(v, t, wv);
                    }
                }
            }
        }
    }
}

/// Backward of [`threshold_slice`]: writes `dL/dx` into `grad_in` and
/// accumulates parameter gradients into `grads`.
pub fn threshold_slice_backward<S: Scalar>(
    x: &[S],
    grad_out: &[S],
    grad_in: &mut [S],
    params: &ThresholdParams<S>,
    lanes: usize,
    grads: &mut ThresholdGrads<S>,
) {
    let n = params.len();
    let group = n * lanes;
    for ((xs, gs), gi) in x.chunks(group).zip(grad_out.chunks(group)).zip(grad_in.chunks_mut(group)) {
        for (p, ((xl, gl), il)) in xs
            .chunks(lanes)
            .zip(gs.chunks(lanes))
            .zip(gi.chunks_mut(lanes))
            .enumerate()
        {
            if params.dc_mask[p] {
                il.copy_from_slice(gl);
                continue;
            }
            let t = params.thresholds[p];
            let v = params.weight(p);
            let mut dt = S::zero();
            let mut dv = S::zero();
            for ((&xv, &g), o) in xl.iter().zip(gl).zip(il.iter_mut()) {
                let d = weighted_grads(xv, t, v);
                *o = g * d.d_x;
                dt = dt + g * d.d_t;
                dv = dv + g * d.d_v;
            }
            grads.d_thresholds[p] = grads.d_thresholds[p] + dt;
            if let Some(w) = &mut grads.d_weights {
                w[p] = w[p] + dv;
            }
        }
    }
}

/// Smallest distance `||v x| - T|` between an unmasked coefficient and its
/// threshold kink, or `None` when every coefficient is masked.
pub fn kink_margin<S: Scalar>(x: &[S], params: &ThresholdParams<S>, lanes: usize) -> Option<S> {
    let group = params.len() * lanes;
    let mut best: Option<S> = None;
    for xs in x.chunks(group) {
        for (p, xl) in xs.chunks(lanes).enumerate() {
            if params.dc_mask[p] {
                continue;
            }
            let (t, v) = (params.thresholds[p], params.weight(p));
            for &xv in xl {
                let d = ((v * xv).abs() - t).abs();
                best = Some(best.map_or(d, |b| if d < b { d } else { b }));
            }
        }
    }
    best
}

/// Saved forward state of [`apply_threshold_tensor`].
#[derive(Debug, Clone)]
pub struct ThresholdTape<S> {
    pub input: Tensor4<S>,
    pub broadcast: Broadcast,
}

fn broadcast_lanes<S: Scalar>(t: &Tensor4<S>, params: &ThresholdParams<S>, broadcast: Broadcast) -> Result<usize> {
    params.validate()?;
    let d = t.dims();
    let (extent, lanes) = match broadcast {
        Broadcast::ChannelAxis => (d.c, 1),
        Broadcast::SpatialAxes => (d.pixels(), d.c),
    };
    if extent != params.len() {
        return Err(WhtError::LengthMismatch {
            expected: extent,
            actual: params.len(),
        });
    }
    Ok(lanes)
}

/// Elementwise (weighted) smooth thresholding of a tensor with parameters
/// shared across the non-broadcast axes. Masked coefficients pass through.
pub fn apply_threshold_tensor<S: Scalar>(
    t: &Tensor4<S>,
    params: &ThresholdParams<S>,
    broadcast: Broadcast,
) -> Result<(Tensor4<S>, ThresholdTape<S>)> {
    let lanes = broadcast_lanes(t, params, broadcast)?;
    let mut out = Tensor4::zeros(t.dims());
    threshold_slice(t.data(), out.data_mut(), params, lanes);
    Ok((
        out,
        ThresholdTape {
            input: t.clone(),
            broadcast,
        },
    ))
}

/// Backward of [`apply_threshold_tensor`].
pub fn threshold_tensor_backward<S: Scalar>(
    tape: &ThresholdTape<S>,
    params: &ThresholdParams<S>,
    grad_out: &Tensor4<S>,
) -> Result<(Tensor4<S>, ThresholdGrads<S>)> {
    let lanes = broadcast_lanes(&tape.input, params, tape.broadcast)?;
    if grad_out.dims() != tape.input.dims() {
        return Err(WhtError::ShapeMismatch(format!(
            "gradient {} vs input {}",
            grad_out.dims(),
            tape.input.dims()
        )));
    }
    let mut grad_in = Tensor4::zeros(grad_out.dims());
    let mut grads = ThresholdGrads::zeros_like(params);
    threshold_slice_backward(tape.input.data(), grad_out.data(), grad_in.data_mut(), params, lanes, &mut grads);
    Ok((grad_in, grads))
}
