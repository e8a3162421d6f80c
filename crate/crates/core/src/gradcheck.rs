//! Central finite-difference checks of the analytic gradients.
//!
//! Relative error is `|a - n| / max(|a|, |n|, REL_FLOOR)`, so values near
//! zero are compared absolutely at the floor's scale.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::layers::{LayerConfig, WhtLayer};
use crate::tensor::{Dims4, Tensor4};
use crate::threshold::{
    smooth_threshold, smooth_threshold_grad_t, smooth_threshold_grad_x, weighted_smooth_threshold,
    weighted_smooth_threshold_grads,
};

/// Step of the central differences.
pub const FD_STEP: f64 = 1e-6;
/// Points with `||v x| - T|` below this are excluded.
pub const KINK_BAND: f64 = 1e-4;
/// Denominator floor of [`relative_error`].
pub const REL_FLOOR: f64 = 1e-3;
/// Cap on kink-avoiding redraws in [`check_layer`].
const MAX_REDRAWS: usize = 1000;
/// Tolerance for scalar and single-layer checks.
pub const LAYER_TOLERANCE: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Outcome of one finite-difference suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            checked: 0,
            skipped: 0,
            max_rel_err: 0.0,
            tolerance,
        }
    }

    pub fn record(&mut self, analytic: f64, numeric: f64) {
        self.checked += 1;
        let e = relative_error(analytic, numeric);
        if e > self.max_rel_err || e.is_nan() {
            self.max_rel_err = e;
        }
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_err <= self.tolerance
    }
}

/// Input and threshold derivatives of the unweighted smooth threshold on
/// `points` random `(x, T)` pairs.
pub fn check_smooth_threshold<R: Rng + ?Sized>(rng: &mut R, points: usize) -> GradCheckReport {
    let mut report = GradCheckReport::new("smooth-threshold", LAYER_TOLERANCE);
    while report.checked < 2 * points {
        let x: f64 = rng.random_range(-4.0..4.0);
        let t: f64 = rng.random_range(0.0..2.0);
        if (x.abs() - t).abs() < KINK_BAND {
            report.skipped += 1;
            continue;
        }
        report.record(
            smooth_threshold_grad_x(x, t),
            central_difference(|x| smooth_threshold(x, t), x, FD_STEP),
        );
        report.record(
            smooth_threshold_grad_t(x, t),
            central_difference(|t| smooth_threshold(x, t), t, FD_STEP),
        );
    }
    report
}

/// `d_v`, `d_T` and `d_x` of the weighted smooth threshold with `v` drawn
/// from `v_range`. The lower end of the range must stay above [`FD_STEP`].
pub fn check_weighted_threshold<R: Rng + ?Sized>(
    rng: &mut R,
    points: usize,
    v_range: (f64, f64),
    name: &str,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new(name, LAYER_TOLERANCE);
    let mut done = 0;
    while done < points {
        let x: f64 = rng.random_range(-4.0..4.0);
        let v: f64 = rng.random_range(v_range.0..v_range.1);
        // Draw T near |v x| half of the time so both branches are exercised.
        let t: f64 = if rng.random_bool(0.5) {
            ((v * x).abs() + rng.random_range(-0.5..0.5)).max(0.0)
        } else {
            rng.random_range(0.0..2.0)
        };
        if ((v * x).abs() - t).abs() < KINK_BAND {
            report.skipped += 1;
            continue;
        }
        let g = weighted_smooth_threshold_grads(x, t, v)?;
        let f = |x: f64, t: f64, v: f64| weighted_smooth_threshold(x, t, v).expect("weight stays non-negative");
        report.record(g.d_x, central_difference(|x| f(x, t, v), x, FD_STEP));
        report.record(g.d_t, central_difference(|t| f(x, t, v), t, FD_STEP));
        report.record(g.d_v, central_difference(|v| f(x, t, v), v, FD_STEP));
        done += 1;
    }
    Ok(report)
}

/// Random thresholds in `[0, 0.5)` (and weights in `[0.2, 1.8)`), large
/// enough that dead zones occur on unit-scale inputs.
pub fn random_layer_params<R: Rng + ?Sized>(rng: &mut R, layer: &mut WhtLayer<f64>) {
    let frozen = layer.frozen_thresholds();
    let p = layer.params_mut();
    for (t, &fz) in p.thresholds.iter_mut().zip(&frozen) {
        if !fz {
            *t = rng.random_range(0.0..0.5);
        }
    }
    if let Some(w) = &mut p.weights {
        for v in w.iter_mut() {
            *v = rng.random_range(0.2..1.8);
        }
    }
}

fn weighted_sum(y: &Tensor4<f64>, r: &Tensor4<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Gradients of `L = sum(r * layer(x))` with respect to the input, the
/// thresholds and the weights of one WHT layer against central differences.
/// Draws are repeated until no coefficient lies within [`KINK_BAND`] of its
/// kink; each redraw counts as one skip.
pub fn check_layer<R: Rng + ?Sized>(rng: &mut R, cfg: &LayerConfig, dims: Dims4) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new(format!("layer {}", cfg.kind), LAYER_TOLERANCE);
    let mut layer = WhtLayer::<f64>::new(cfg.clone(), rng)?;
    let out_dims = layer.output_dims(dims)?;
    let (x, r) = loop {
        random_layer_params(rng, &mut layer);
        let x = Tensor4::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0));
        let r = Tensor4::from_fn(out_dims, |_, _, _, _| rng.random_range(-1.0..1.0));
        let (_, tape) = layer.forward(&x)?;
        match layer.kink_margin(&tape) {
            Some(m) if m < 10.0 * KINK_BAND && report.skipped < MAX_REDRAWS => report.skipped += 1,
            _ => break (x, r),
        }
    };
    let (_, tape) = layer.forward(&x)?;
    let (gx, gp) = layer.backward(&tape, &r)?;
    let loss = |layer: &WhtLayer<f64>, x: &Tensor4<f64>| -> f64 {
        weighted_sum(&layer.forward(x).expect("shape checked").0, &r)
    };

    for i in 0..x.data().len() {
        let numeric = central_difference(
            |v| {
                let mut xp = x.clone();
                xp.data_mut()[i] = v;
                loss(&layer, &xp)
            },
            x.data()[i],
            FD_STEP,
        );
        report.record(gx.data()[i], numeric);
    }

    let frozen = layer.frozen_thresholds();
    for i in 0..layer.params().len() {
        if frozen[i] {
            continue;
        }
        let base = layer.params().thresholds[i];
        let mut probe = layer.clone();
        let numeric = central_difference(
            |t| {
                probe.params_mut().thresholds[i] = t;
                loss(&probe, &x)
            },
            base,
            FD_STEP,
        );
        report.record(gp.d_thresholds[i], numeric);
    }

    if let (Some(weights), Some(dw)) = (layer.params().weights.clone(), gp.d_weights.as_ref()) {
        for (i, &base) in weights.iter().enumerate() {
            let mut probe = layer.clone();
            let numeric = central_difference(
                |v| {
                    probe.params_mut().weights.as_mut().expect("weighted")[i] = v;
                    loss(&probe, &x)
                },
                base,
                FD_STEP,
            );
            report.record(dw[i], numeric);
        }
    }
    Ok(report)
}

/// Toy configurations covering every layer kind, with matching input dims.
pub fn toy_layer_suite() -> Vec<(LayerConfig, Dims4)> {
    use crate::factor::Factor;
    let f = Factor::from_integer;
    vec![
        (LayerConfig::fwht_expand(3, f(2)), Dims4::new(2, 2, 1, 3)),
        (LayerConfig::fwht_expand(4, f(3)), Dims4::new(1, 1, 2, 4)),
        (LayerConfig::fwht_project(12, f(3)), Dims4::new(2, 1, 2, 12)),
        (LayerConfig::fwht_project(8, f(2)), Dims4::new(1, 2, 1, 8)),
        (LayerConfig::bwht_expand(6, 4, f(2)), Dims4::new(2, 1, 2, 6)),
        (LayerConfig::bwht_expand(8, 8, f(2)), Dims4::new(1, 1, 1, 8)),
        (LayerConfig::bwht_project(16, 4, f(2)), Dims4::new(2, 1, 1, 16)),
        (LayerConfig::bwht_project(8, 8, f(4)), Dims4::new(1, 2, 1, 8)),
        (LayerConfig::fwht_2d(3, 3, 2, false, false), Dims4::new(2, 3, 3, 2)),
        (LayerConfig::fwht_2d(4, 2, 3, true, false), Dims4::new(1, 4, 2, 3)),
        (LayerConfig::fwht_2d(3, 4, 2, false, true), Dims4::new(2, 3, 4, 2)),
        (LayerConfig::fwht_2d(4, 4, 1, true, true), Dims4::new(1, 4, 4, 1)),
    ]
}
