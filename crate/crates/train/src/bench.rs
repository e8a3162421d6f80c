//! Forward-pass microbenchmarks of WHT layers against their baselines.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use walshnet_core::transform::{ceil_log2, fwht_2d_counted};
use walshnet_core::{
    walsh_matrix, Dims4, Factor, LayerConfig, NoCount, OpCount, OpCounter, Scalar, Tensor4, WalshSpec, WhtLayer,
};

use crate::error::{Result, TrainError};
use crate::ops::{conv2d_direct, Conv2d, SqueezeExcite};

pub const MIN_REPETITIONS: usize = 20;
pub const MIN_WARMUPS: usize = 3;
/// Largest transform order the dense reference accepts in a benchmark.
const MAX_DENSE_BENCH_ORDER: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchKind {
    /// 2D WHT layer forward; counts from the butterfly kernels.
    Fwht2d,
    /// Forward and inverse 2D transform by dense matrix products.
    Fwht2dDense,
    /// Nested-loop 3x3 convolution, stride 1, same padding, `c -> c`.
    Conv3x3,
    /// The training 3x3 convolution (im2col and GEMM), `c -> c`.
    Conv3x3Gemm,
    /// Squeeze-and-excitation with ratio 1/4.
    SqueezeExcite,
}

impl BenchKind {
    pub const ALL: [BenchKind; 5] = [
        BenchKind::Fwht2d,
        BenchKind::Fwht2dDense,
        BenchKind::Conv3x3,
        BenchKind::Conv3x3Gemm,
        BenchKind::SqueezeExcite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchKind::Fwht2d => "fwht-2d",
            BenchKind::Fwht2dDense => "fwht-2d-dense",
            BenchKind::Conv3x3 => "conv3x3",
            BenchKind::Conv3x3Gemm => "conv3x3-gemm",
            BenchKind::SqueezeExcite => "squeeze-excite",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
            TrainError::Config(format!("unknown bench layer `{s}` (known: {})", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub repetitions: usize,
    pub warmups: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            repetitions: MIN_REPETITIONS,
            warmups: MIN_WARMUPS,
            seed: 0,
        }
    }
}

/// One benchmark measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub layer: String,
    /// `[n, w, h, c]`.
    pub dims: [usize; 4],
    pub repetitions: usize,
    pub warmups: usize,
    pub median_seconds: f64,
    pub min_seconds: f64,
    /// Instrumented counts of the arithmetic kernel, when it has one.
    pub additions: Option<u64>,
    pub multiplications: Option<u64>,
    pub scalings: Option<u64>,
    pub params: usize,
    /// Sum of the bytes of every buffer live during the forward pass.
    pub peak_bytes: usize,
}

fn median(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

/// Runs `f` `warmups` times untimed, then `repetitions` times timed.
fn time<T>(opts: &BenchOptions, mut f: impl FnMut() -> Result<T>) -> Result<(f64, f64)> {
    for _ in 0..opts.warmups {
        std::hint::black_box(f()?);
    }
    let mut samples = Vec::with_capacity(opts.repetitions);
    for _ in 0..opts.repetitions {
        let start = Instant::now();
        std::hint::black_box(f()?);
        samples.push(start.elapsed().as_secs_f64());
    }
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((median(samples), min))
}

fn bytes<S>(elements: usize) -> usize {
    elements * std::mem::size_of::<S>()
}

/// Dense-matrix 2D transform of every channel slice, used as the reference
/// whose operation count the butterflies undercut.
fn dense_2d<S: Scalar, C: OpCounter>(x: &Tensor4<S>, counter: &mut C) -> Result<Tensor4<S>> {
    let d = x.dims();
    let (kw, kh) = (ceil_log2(d.w), ceil_log2(d.h));
    if !d.w.is_power_of_two() || !d.h.is_power_of_two() {
        return Err(TrainError::Config("dense 2D reference needs power-of-two width and height".into()));
    }
    if kw > MAX_DENSE_BENCH_ORDER || kh > MAX_DENSE_BENCH_ORDER {
        return Err(TrainError::Config("dense 2D reference is limited to 256x256".into()));
    }
    let (mw, mh) = (walsh_matrix(kw)?, walsh_matrix(kh)?);
    let mut y = x.clone();
    let mut fiber_w = vec![S::zero(); d.w];
    let mut fiber_h = vec![S::zero(); d.h];
    for b in 0..d.n {
        for ch in 0..d.c {
            for j in 0..d.h {
                for i in 0..d.w {
                    fiber_w[i] = y.get(b, i, j, ch);
                }
                for (i, v) in mw.mul_vec_counted(&fiber_w, counter).into_iter().enumerate() {
                    y.set(b, i, j, ch, v);
                }
            }
            for i in 0..d.w {
                for j in 0..d.h {
                    fiber_h[j] = y.get(b, i, j, ch);
                }
                for (j, v) in mh.mul_vec_counted(&fiber_h, counter).into_iter().enumerate() {
                    y.set(b, i, j, ch, v);
                }
            }
        }
    }
    Ok(y)
}

/// Benchmarks one layer kind on `f32` data at `dims`.
pub fn run_bench(kind: BenchKind, dims: Dims4, opts: &BenchOptions) -> Result<BenchResult> {
    if opts.repetitions < MIN_REPETITIONS || opts.warmups < MIN_WARMUPS {
        return Err(TrainError::Config(format!(
            "benchmarks need at least {MIN_REPETITIONS} repetitions and {MIN_WARMUPS} warm-ups"
        )));
    }
    if dims.is_empty() {
        return Err(TrainError::Config(format!("invalid bench dims {dims}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let x = Tensor4::<f32>::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0));
    let (n, w, h, c) = (dims.n, dims.w, dims.h, dims.c);
    let mut counts: Option<OpCount> = None;
    let (median_seconds, min_seconds, params, peak_bytes) = match kind {
        BenchKind::Fwht2d => {
            let cfg = LayerConfig::fwht_2d(w, h, c, false, false);
            let layer = WhtLayer::<f32>::new(cfg, &mut rng)?;
            let (pw, ph) = (w.next_power_of_two(), h.next_power_of_two());
            let spec_w = WalshSpec::layer(ceil_log2(w));
            let spec_h = WalshSpec::layer(ceil_log2(h));
            let mut probe = x.resize_spatial(pw, ph);
            let mut count = OpCount::default();
            fwht_2d_counted(&mut probe, spec_w, spec_h, &mut count)?;
            fwht_2d_counted(&mut probe, spec_w, spec_h, &mut count)?;
            counts = Some(count);
            let (med, min) = time(opts, || Ok(layer.forward(&x)?.0))?;
            let coeffs = n * pw * ph * c;
            let peak = bytes::<f32>(x.data().len() + 2 * coeffs + x.data().len() + pw * ph * c);
            (med, min, layer.param_count().trainable, peak)
        }
        BenchKind::Fwht2dDense => {
            let mut count = OpCount::default();
            let y = dense_2d(&x, &mut count)?;
            dense_2d(&y, &mut count)?;
            counts = Some(count);
            let (med, min) = time(opts, || {
                let y = dense_2d(&x, &mut NoCount)?;
                dense_2d(&y, &mut NoCount)
            })?;
            (med, min, 0, bytes::<f32>(3 * x.data().len()) + bytes::<i8>(w * w + h * h))
        }
        BenchKind::Conv3x3 => {
            let conv = Conv2d::<f32>::new(c, c, 3, 1, false, &mut rng);
            let mut count = OpCount::default();
            conv2d_direct(&x, &conv.weight.value, None, c, 3, 1, &mut count)?;
            counts = Some(count);
            let (med, min) = time(opts, || conv2d_direct(&x, &conv.weight.value, None, c, 3, 1, &mut NoCount))?;
            let peak = bytes::<f32>(2 * x.data().len() + (w + 2) * (h + 2) * c + conv.weight.len());
            (med, min, conv.param_count(), peak)
        }
        BenchKind::Conv3x3Gemm => {
            let conv = Conv2d::<f32>::new(c, c, 3, 1, false, &mut rng);
            let (med, min) = time(opts, || Ok(conv.forward(&x)?.0))?;
            let peak = bytes::<f32>(3 * x.data().len() + n * w * h * 9 * c + conv.weight.len());
            (med, min, conv.param_count(), peak)
        }
        BenchKind::SqueezeExcite => {
            let se = SqueezeExcite::<f32>::new(c, Factor::new(1, 4), &mut rng)?;
            let (med, min) = time(opts, || Ok(se.forward(&x)?.0))?;
            let peak = bytes::<f32>(3 * x.data().len() + se.param_count() + n * (2 * c + se.hidden));
            (med, min, se.param_count(), peak)
        }
    };
    Ok(BenchResult {
        layer: kind.name().to_string(),
        dims: [n, w, h, c],
        repetitions: opts.repetitions,
        warmups: opts.warmups,
        median_seconds,
        min_seconds,
        additions: counts.map(|c| c.additions),
        multiplications: counts.map(|c| c.multiplications),
        scalings: counts.map(|c| c.scalings),
        params,
        peak_bytes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> BenchOptions {
        BenchOptions {
            repetitions: MIN_REPETITIONS,
            warmups: MIN_WARMUPS,
            seed: 1,
        }
    }

    #[test]
    fn fwht_counts_are_butterfly_exact() {
        let r = run_bench(BenchKind::Fwht2d, Dims4::new(2, 4, 8, 3), &quick()).unwrap();
        // Two 2D transforms, each a width pass and a height pass.
        let per_2d = 2 * 3 * (8 * 4 * 2 + 4 * 8 * 3);
        assert_eq!(r.additions, Some(2 * per_2d as u64));
        assert_eq!(r.multiplications, Some(0));
        assert_eq!(r.params, 32);
    }

    #[test]
    fn dense_reference_costs_more() {
        let d = Dims4::new(1, 8, 8, 2);
        let fast = run_bench(BenchKind::Fwht2d, d, &quick()).unwrap();
        let dense = run_bench(BenchKind::Fwht2dDense, d, &quick()).unwrap();
        assert!(dense.additions.unwrap() > fast.additions.unwrap());
        assert!(dense.multiplications.unwrap() > 0);
    }

    #[test]
    fn conv_count_closed_form() {
        let (w, h, c) = (5, 4, 6);
        let r = run_bench(BenchKind::Conv3x3, Dims4::new(2, w, h, c), &quick()).unwrap();
        assert_eq!(r.multiplications, Some((2 * 9 * w * h * c * c) as u64));
        assert_eq!(r.params, 9 * c * c);
    }

    #[test]
    fn rejects_too_few_repetitions() {
        let opts = BenchOptions {
            repetitions: 5,
            ..quick()
        };
        assert!(run_bench(BenchKind::Conv3x3, Dims4::new(1, 2, 2, 1), &opts).is_err());
        assert!(BenchKind::parse("nope").is_err());
        assert_eq!(BenchKind::parse("fwht-2d").unwrap(), BenchKind::Fwht2d);
    }
}
