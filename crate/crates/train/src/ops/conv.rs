//! 1x1 and 3x3 convolutions with "same" padding.
//!
//! The training path lowers each batch item to an im2col matrix and calls
//! GEMM. [`conv2d_direct`] is a plain nested-loop convolution used as an
//! oracle and as the benchmark baseline.

use rand::Rng;
use rayon::prelude::*;
use walshnet_core::{Dims4, OpCounter, Tensor4};

use crate::error::{Result, TrainError};
use crate::param::{join, Param, ParamRole, ParamView};
use crate::real::{gemm, Operand, Real};

/// Output extent and leading pad of one spatial axis under "same" padding:
/// `out = ceil(in / stride)`, total pad split with the smaller half first.
pub fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out.saturating_sub(1)) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

/// Static shape information of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub kernel: usize,
    pub stride: usize,
    pub input: Dims4,
    pub output: Dims4,
    pub pad_w: usize,
    pub pad_h: usize,
}

impl ConvShape {
    pub fn new(input: Dims4, out_channels: usize, kernel: usize, stride: usize) -> Result<Self> {
        if kernel != 1 && kernel != 3 {
            return Err(TrainError::Model(format!("unsupported kernel size {kernel}")));
        }
        if stride != 1 && stride != 2 {
            return Err(TrainError::Model(format!("unsupported stride {stride}")));
        }
        let (ow, pad_w) = same_padding(input.w, kernel, stride);
        let (oh, pad_h) = same_padding(input.h, kernel, stride);
        Ok(Self {
            kernel,
            stride,
            input,
            output: Dims4::new(input.n, ow, oh, out_channels),
            pad_w,
            pad_h,
        })
    }

    /// Columns of the im2col matrix: `kernel^2 * in_channels`.
    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.input.c
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1
    }

    /// Input coordinate read by output `o` at tap `d`, if inside the image.
    #[inline]
    fn source(o: usize, d: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        (o * stride + d).checked_sub(pad).filter(|&i| i < extent)
    }

    /// Fills `cols` (`out_pixels x patch_len`) from one input item.
    fn im2col<S: Real>(&self, item: &[S], cols: &mut [S]) {
        let (d, o, k, c) = (self.input, self.output, self.kernel, self.input.c);
        let patch = self.patch_len();
        for ox in 0..o.w {
            for oy in 0..o.h {
                let row = &mut cols[(ox * o.h + oy) * patch..(ox * o.h + oy + 1) * patch];
                for dx in 0..k {
                    for dy in 0..k {
                        let dst = &mut row[(dx * k + dy) * c..(dx * k + dy + 1) * c];
                        match (
                            Self::source(ox, dx, self.stride, self.pad_w, d.w),
                            Self::source(oy, dy, self.stride, self.pad_h, d.h),
                        ) {
                            (Some(ix), Some(iy)) => dst.copy_from_slice(&item[(ix * d.h + iy) * c..(ix * d.h + iy + 1) * c]),
                            _ => dst.fill(S::zero()),
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds `cols` back onto an input-shaped gradient.
    fn col2im<S: Real>(&self, cols: &[S], item: &mut [S]) {
        let (d, o, k, c) = (self.input, self.output, self.kernel, self.input.c);
        let patch = self.patch_len();
        item.fill(S::zero());
        for ox in 0..o.w {
            for oy in 0..o.h {
                let row = &cols[(ox * o.h + oy) * patch..(ox * o.h + oy + 1) * patch];
                for dx in 0..k {
                    for dy in 0..k {
                        if let (Some(ix), Some(iy)) = (
                            Self::source(ox, dx, self.stride, self.pad_w, d.w),
                            Self::source(oy, dy, self.stride, self.pad_h, d.h),
                        ) {
                            let src = &row[(dx * k + dy) * c..(dx * k + dy + 1) * c];
                            let dst = &mut item[(ix * d.h + iy) * c..(ix * d.h + iy + 1) * c];
                            for (a, &b) in dst.iter_mut().zip(src) {
                                *a = *a + b;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Convolution layer. Weights are laid out `[kx, ky, c_in, c_out]`.
#[derive(Debug, Clone)]
pub struct Conv2d<S> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weight: Param<S>,
    pub bias: Option<Param<S>>,
}

/// Saved input of a convolution.
#[derive(Debug, Clone)]
pub struct ConvTape<S> {
    input: Tensor4<S>,
}

impl<S: Real> Conv2d<S> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = kernel * kernel * in_channels;
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: Param::kaiming(&[kernel, kernel, in_channels, out_channels], fan_in, rng),
            bias: bias.then(|| Param::zeros(&[out_channels])),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Param::len)
    }

    pub fn shape(&self, input: Dims4) -> Result<ConvShape> {
        if input.c != self.in_channels {
            return Err(TrainError::Model(format!(
                "convolution expects {} channels, got {input}",
                self.in_channels
            )));
        }
        ConvShape::new(input, self.out_channels, self.kernel, self.stride)
    }

    pub fn forward(&self, x: &Tensor4<S>) -> Result<(Tensor4<S>, ConvTape<S>)> {
        let shape = self.shape(x.dims())?;
        let y = self.forward_with(&shape, x);
        Ok((y, ConvTape { input: x.clone() }))
    }

    fn forward_with(&self, shape: &ConvShape, x: &Tensor4<S>) -> Tensor4<S> {
        let o = shape.output;
        let mut y = Tensor4::zeros(o);
        let (in_len, out_len) = (shape.input.item_len(), o.item_len());
        if o.is_empty() {
            return y;
        }
        let pixels = o.pixels();
        let patch = shape.patch_len();
        let w = &self.weight.value;
        let pointwise = shape.is_pointwise();
        x.data()
            .par_chunks(in_len.max(1))
            .zip(y.data_mut().par_chunks_mut(out_len))
            .for_each_init(
                || vec![S::zero(); if pointwise { 0 } else { pixels * patch }],
                |cols, (xi, yi)| {
                    let a = if pointwise {
                        xi
                    } else {
                        shape.im2col(xi, cols);
                        &cols[..]
                    };
                    gemm(pixels, patch, self.out_channels, Operand::new(a), Operand::new(w), yi, false);
                    if let Some(b) = &self.bias {
                        for row in yi.chunks_exact_mut(self.out_channels) {
                            for (v, &bv) in row.iter_mut().zip(&b.value) {
                                *v = *v + bv;
                            }
                        }
                    }
                },
            );
        y
    }

    /// Accumulates weight and bias gradients and returns the input gradient.
    pub fn backward(&mut self, tape: &ConvTape<S>, dy: &Tensor4<S>) -> Result<Tensor4<S>> {
        let shape = self.shape(tape.input.dims())?;
        if dy.dims() != shape.output {
            return Err(TrainError::Model(format!(
                "convolution gradient {} vs output {}",
                dy.dims(),
                shape.output
            )));
        }
        let mut dx = Tensor4::zeros(shape.input);
        let (in_len, out_len) = (shape.input.item_len(), shape.output.item_len());
        if shape.output.is_empty() || in_len == 0 {
            return Ok(dx);
        }
        let pixels = shape.output.pixels();
        let patch = shape.patch_len();
        let co = self.out_channels;
        let pointwise = shape.is_pointwise();
        let w = &self.weight.value;
        let per_item: Vec<Vec<S>> = tape
            .input
            .data()
            .par_chunks(in_len)
            .zip(dy.data().par_chunks(out_len))
            .zip(dx.data_mut().par_chunks_mut(in_len))
            .map_init(
                || (vec![S::zero(); pixels * patch], vec![S::zero(); pixels * patch]),
                |(cols, dcols), ((xi, gi), dxi)| {
                    let a: &[S] = if pointwise {
                        xi
                    } else {
                        shape.im2col(xi, cols);
                        cols
                    };
                    let mut dw = vec![S::zero(); patch * co];
                    gemm(patch, pixels, co, Operand::t(a), Operand::new(gi), &mut dw, false);
                    if pointwise {
                        gemm(pixels, co, patch, Operand::new(gi), Operand::t(w), dxi, false);
                    } else {
                        gemm(pixels, co, patch, Operand::new(gi), Operand::t(w), dcols, false);
                        shape.col2im(dcols, dxi);
                    }
                    dw
                },
            )
            .collect();
        for dw in per_item {
            for (g, d) in self.weight.grad.iter_mut().zip(dw) {
                *g = *g + d;
            }
        }
        if let Some(b) = &mut self.bias {
            for row in dy.data().chunks_exact(co) {
                for (g, &d) in b.grad.iter_mut().zip(row) {
                    *g = *g + d;
                }
            }
        }
        Ok(dx)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_, S>)) {
        f(self.weight.view(join(prefix, "weight"), ParamRole::Trainable));
        if let Some(b) = &mut self.bias {
            f(b.view(join(prefix, "bias"), ParamRole::Trainable));
        }
    }
}

/// Nested-loop convolution over a zero-padded copy of the input. Every
/// output visits all `kernel^2` taps, so the instrumented count is exactly
/// `kernel^2 * c_in * c_out` multiplications and additions per output pixel.
pub fn conv2d_direct<S: Real, C: OpCounter>(
    x: &Tensor4<S>,
    weight: &[S],
    bias: Option<&[S]>,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    counter: &mut C,
) -> Result<Tensor4<S>> {
    let shape = ConvShape::new(x.dims(), out_channels, kernel, stride)?;
    let (d, o) = (shape.input, shape.output);
    if weight.len() != kernel * kernel * d.c * out_channels {
        return Err(TrainError::Model("direct convolution weight has wrong length".into()));
    }
    let (pw, ph) = ((o.w - 1) * stride + kernel, (o.h - 1) * stride + kernel);
    let mut padded = vec![S::zero(); pw * ph * d.c];
    let mut y = Tensor4::zeros(o);
    let (c, co) = (d.c, out_channels);
    for b in 0..d.n {
        padded.fill(S::zero());
        let item = x.item(b);
        for ix in 0..d.w.min(pw - shape.pad_w) {
            for iy in 0..d.h.min(ph - shape.pad_h) {
                let dst = ((ix + shape.pad_w) * ph + iy + shape.pad_h) * c;
                padded[dst..dst + c].copy_from_slice(&item[(ix * d.h + iy) * c..(ix * d.h + iy + 1) * c]);
            }
        }
        let out = y.item_mut(b);
        for ox in 0..o.w {
            for oy in 0..o.h {
                let acc = &mut out[(ox * o.h + oy) * co..(ox * o.h + oy + 1) * co];
                if let Some(bias) = bias {
                    acc.copy_from_slice(bias);
                }
                for dx in 0..kernel {
                    for dy in 0..kernel {
                        let px = ((ox * stride + dx) * ph + oy * stride + dy) * c;
                        let taps = &weight[(dx * kernel + dy) * c * co..(dx * kernel + dy + 1) * c * co];
                        for (ci, wrow) in taps.chunks_exact(co).enumerate() {
                            let a = padded[px + ci];
                            for (acc_v, &wv) in acc.iter_mut().zip(wrow) {
                                *acc_v = *acc_v + a * wv;
                            }
                        }
                        counter.multiplications((c * co) as u64);
                        counter.additions((c * co) as u64);
                    }
                }
            }
        }
    }
    Ok(y)
}
