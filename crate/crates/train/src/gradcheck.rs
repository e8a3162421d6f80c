//! Finite-difference check of a whole model's loss gradient.

use rand::Rng;
use walshnet_core::gradcheck::{central_difference, GradCheckReport, FD_STEP, KINK_BAND};
use walshnet_core::{Factor, LayerKind, Precision, Tensor4};

use crate::error::{Result, TrainError};
use crate::model::{InputShape, LayerSpec, Model, ModelSpec};
use crate::ops::softmax_cross_entropy;

/// Tolerance of the end-to-end check.
pub const MODEL_TOLERANCE: f64 = 1e-4;
const MAX_REDRAWS: usize = 1000;
/// Largest item size accepted by [`check_model`].
pub const MAX_TOY_ITEM: usize = 512;

/// BWHT expansion, weighted 2D WHT, pooling and a dense head at toy size.
pub fn toy_model_spec(seed: u64) -> ModelSpec {
    ModelSpec {
        input: InputShape {
            width: 3,
            height: 4,
            channels: 4,
        },
        classes: 3,
        seed,
        precision: Precision::F64,
        layers: vec![
            LayerSpec::wht(LayerKind::BwhtExpand, Factor::from_integer(2), Some(4)),
            LayerSpec::fwht_2d(false, true),
            LayerSpec::Gap,
            LayerSpec::dense(3),
        ],
    }
}

fn loss(model: &Model<f64>, x: &Tensor4<f64>, labels: &[usize]) -> Result<f64> {
    Ok(softmax_cross_entropy(&model.predict(x)?, labels)?.loss)
}

/// Compares the analytic gradient of the mean cross-entropy with respect to
/// the input and every trainable element against central differences. The
/// input batch is redrawn until no WHT coefficient lies near a kink.
pub fn check_model<R: Rng + ?Sized>(rng: &mut R, spec: ModelSpec, batch: usize) -> Result<GradCheckReport> {
    if spec.input.dims(1).item_len() > MAX_TOY_ITEM || batch > 8 {
        return Err(TrainError::Config("gradient checks are limited to toy sizes".into()));
    }
    if spec.layers.iter().any(|l| matches!(l, LayerSpec::BatchNorm | LayerSpec::Residual { .. })) {
        return Err(TrainError::Config(
            "gradient checks need a model without batch statistics".into(),
        ));
    }
    let mut report = GradCheckReport::new("full-model", MODEL_TOLERANCE);
    let mut model = Model::<f64>::new(spec.clone())?;
    let dims = spec.input.dims(batch);
    let (x, labels) = loop {
        let x = Tensor4::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0));
        let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..spec.classes)).collect();
        let (_, tape) = model.forward_train(&x)?;
        match model.kink_margin(&tape) {
            Some(m) if m < 10.0 * KINK_BAND && report.skipped < MAX_REDRAWS => report.skipped += 1,
            _ => break (x, labels),
        }
    };
    model.zero_grad();
    let (logits, tape) = model.forward_train(&x)?;
    let out = softmax_cross_entropy(&logits, &labels)?;
    let dx = model.backward(&tape, &out.grad)?;

    for i in 0..x.data().len() {
        let numeric = central_difference(
            |v| {
                let mut xp = x.clone();
                xp.data_mut()[i] = v;
                loss(&model, &xp, &labels).expect("shape checked")
            },
            x.data()[i],
            FD_STEP,
        );
        report.record(dx.data()[i], numeric);
    }

    let mut entries = Vec::new();
    let mut k = 0;
    model.visit_params(&mut |v| {
        if v.role.is_trainable() {
            for i in 0..v.value.len() {
                if !v.is_frozen(i) {
                    entries.push((k, i, v.value[i], v.grad[i]));
                }
            }
        }
        k += 1;
    });
    for (view, i, base, analytic) in entries {
        let numeric = central_difference(
            |value| {
                let mut probe = model.clone();
                let mut k = 0;
                probe.visit_params(&mut |v| {
                    if k == view {
                        v.value[i] = value;
                    }
                    k += 1;
                });
                loss(&probe, &x, &labels).expect("shape checked")
            },
            base,
            FD_STEP,
        );
        report.record(analytic, numeric);
    }
    Ok(report)
}
