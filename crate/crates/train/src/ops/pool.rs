//! Global average pooling and strided subsampling.

use walshnet_core::{Dims4, Tensor4};

use crate::error::{Result, TrainError};
use crate::real::Real;

/// Mean over the spatial axes, producing `[n, 1, 1, c]`.
pub fn gap_forward<S: Real>(x: &Tensor4<S>) -> Tensor4<S> {
    let d = x.dims();
    let mut y = Tensor4::zeros(Dims4::new(d.n, 1, 1, d.c));
    let inv = S::from_usize_lossy(d.pixels().max(1)).recip();
    for b in 0..d.n {
        let out = y.item_mut(b);
        for fiber in x.item(b).chunks_exact(d.c.max(1)) {
            for (o, &v) in out.iter_mut().zip(fiber) {
                *o = *o + v;
            }
        }
        out.iter_mut().for_each(|o| *o = *o * inv);
    }
    y
}

pub fn gap_backward<S: Real>(input: Dims4, dy: &Tensor4<S>) -> Tensor4<S> {
    let inv = S::from_usize_lossy(input.pixels().max(1)).recip();
    let mut dx = Tensor4::zeros(input);
    for b in 0..input.n {
        let g = dy.item(b);
        for fiber in dx.item_mut(b).chunks_exact_mut(input.c.max(1)) {
            for (o, &v) in fiber.iter_mut().zip(g) {
                *o = v * inv;
            }
        }
    }
    dx
}

/// Output dims of keeping every `stride`-th pixel along both axes.
pub fn subsample_dims(input: Dims4, stride: usize) -> Result<Dims4> {
    if stride == 0 {
        return Err(TrainError::Model("subsample stride must be positive".into()));
    }
    Ok(input.with_spatial(input.w.div_ceil(stride), input.h.div_ceil(stride)))
}

pub fn subsample_forward<S: Real>(x: &Tensor4<S>, stride: usize) -> Result<Tensor4<S>> {
    let od = subsample_dims(x.dims(), stride)?;
    let d = x.dims();
    let mut y = Tensor4::zeros(od);
    for b in 0..d.n {
        for i in 0..od.w {
            for j in 0..od.h {
                let src = x.offset(b, i * stride, j * stride, 0);
                let dst = y.offset(b, i, j, 0);
                y.data_mut()[dst..dst + d.c].copy_from_slice(&x.data()[src..src + d.c]);
            }
        }
    }
    Ok(y)
}

pub fn subsample_backward<S: Real>(input: Dims4, stride: usize, dy: &Tensor4<S>) -> Result<Tensor4<S>> {
    let od = subsample_dims(input, stride)?;
    if dy.dims() != od {
        return Err(TrainError::Model("subsample gradient shape mismatch".into()));
    }
    let mut dx = Tensor4::zeros(input);
    for b in 0..input.n {
        for i in 0..od.w {
            for j in 0..od.h {
                let dst = dx.offset(b, i * stride, j * stride, 0);
                let src = dy.offset(b, i, j, 0);
                dx.data_mut()[dst..dst + input.c].copy_from_slice(&dy.data()[src..src + input.c]);
            }
        }
    }
    Ok(dx)
}
