use serde::{Deserialize, Serialize};

use crate::error::{Result, WhtError};
use crate::scalar::Scalar;

/// Extents of a batch-major NHWC tensor: batch, width, height, channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims4 {
    pub n: usize,
    pub w: usize,
    pub h: usize,
    pub c: usize,
}

impl Dims4 {
    pub const fn new(n: usize, w: usize, h: usize, c: usize) -> Self {
        Self { n, w, h, c }
    }

    pub const fn len(&self) -> usize {
        self.n * self.w * self.h * self.c
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of elements in one batch item.
    pub const fn item_len(&self) -> usize {
        self.w * self.h * self.c
    }

    pub const fn pixels(&self) -> usize {
        self.w * self.h
    }

    pub const fn with_channels(self, c: usize) -> Self {
        Self { c, ..self }
    }

    pub const fn with_spatial(self, w: usize, h: usize) -> Self {
        Self { w, h, ..self }
    }

    pub const fn as_array(&self) -> [usize; 4] {
        [self.n, self.w, self.h, self.c]
    }
}

impl std::fmt::Display for Dims4 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.w, self.h, self.c)
    }
}

/// Dense NHWC feature map. Element `(b, x, y, ch)` lives at
/// `((b * w + x) * h + y) * c + ch`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<S> {
    dims: Dims4,
    data: Vec<S>,
}

impl<S: Scalar> Tensor4<S> {
    pub fn zeros(dims: Dims4) -> Self {
        Self {
            dims,
            data: vec![S::zero(); dims.len()],
        }
    }

    pub fn filled(dims: Dims4, value: S) -> Self {
        Self {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_vec(dims: Dims4, data: Vec<S>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(WhtError::LengthMismatch {
                expected: dims.len(),
                actual: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    /// Builds a tensor from `f64` values, converting to the scalar type.
    pub fn from_f64(dims: Dims4, data: &[f64]) -> Result<Self> {
        Self::from_vec(dims, data.iter().map(|&v| S::from_f64_lossy(v)).collect())
    }

    pub fn from_fn(dims: Dims4, mut f: impl FnMut(usize, usize, usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for b in 0..dims.n {
            for x in 0..dims.w {
                for y in 0..dims.h {
                    for ch in 0..dims.c {
                        data.push(f(b, x, y, ch));
                    }
                }
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> Dims4 {
        self.dims
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn offset(&self, b: usize, x: usize, y: usize, ch: usize) -> usize {
        let d = self.dims;
        debug_assert!(b < d.n && x < d.w && y < d.h && ch < d.c);
        ((b * d.w + x) * d.h + y) * d.c + ch
    }

    #[inline]
    pub fn get(&self, b: usize, x: usize, y: usize, ch: usize) -> S {
        self.data[self.offset(b, x, y, ch)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, x: usize, y: usize, ch: usize, v: S) {
        let o = self.offset(b, x, y, ch);
        self.data[o] = v;
    }

    /// Contiguous slice holding batch item `b`.
    pub fn item(&self, b: usize) -> &[S] {
        let l = self.dims.item_len();
        &self.data[b * l..(b + 1) * l]
    }

    pub fn item_mut(&mut self, b: usize) -> &mut [S] {
        let l = self.dims.item_len();
        &mut self.data[b * l..(b + 1) * l]
    }

    /// Channel fibers, one per (batch, x, y) position.
    pub fn fibers(&self) -> std::slice::ChunksExact<'_, S> {
        self.data.chunks_exact(self.dims.c.max(1))
    }

    pub fn fibers_mut(&mut self) -> std::slice::ChunksExactMut<'_, S> {
        let c = self.dims.c.max(1);
        self.data.chunks_exact_mut(c)
    }

    pub fn reshape(self, dims: Dims4) -> Result<Self> {
        Self::from_vec(dims, self.data)
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.dims, other.dims, "tensor dims differ");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn scale(&mut self, s: S) {
        for v in &mut self.data {
            *v = *v * s;
        }
    }

    /// Copies the channel range `[from, from + len)` of every fiber into a
    /// new tensor with `len` channels.
    pub fn slice_channels(&self, from: usize, len: usize) -> Self {
        assert!(from + len <= self.dims.c);
        let mut out = Vec::with_capacity(self.dims.n * self.dims.pixels() * len);
        for fiber in self.fibers() {
            out.extend_from_slice(&fiber[from..from + len]);
        }
        Self {
            dims: self.dims.with_channels(len),
            data: out,
        }
    }

    /// Zero-extends (or truncates) the channel axis to `c` channels.
    pub fn resize_channels(&self, c: usize) -> Self {
        let keep = c.min(self.dims.c);
        let mut out = Vec::with_capacity(self.dims.n * self.dims.pixels() * c);
        for fiber in self.fibers() {
            out.extend_from_slice(&fiber[..keep]);
            out.extend(std::iter::repeat(S::zero()).take(c - keep));
        }
        Self {
            dims: self.dims.with_channels(c),
            data: out,
        }
    }

    /// Zero-extends (or crops) the spatial axes to `w x h`, anchored at the origin.
    pub fn resize_spatial(&self, w: usize, h: usize) -> Self {
        let d = self.dims;
        let mut out = Self::zeros(d.with_spatial(w, h));
        let (cw, ch) = (w.min(d.w), h.min(d.h));
        for b in 0..d.n {
            for x in 0..cw {
                let src = ((b * d.w + x) * d.h) * d.c;
                let dst = ((b * w + x) * h) * d.c;
                out.data[dst..dst + ch * d.c].copy_from_slice(&self.data[src..src + ch * d.c]);
            }
        }
        out
    }

    pub fn max_abs(&self) -> S {
        self.data
            .iter()
            .fold(S::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        assert_eq!(self.dims, other.dims, "tensor dims differ");
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |m, (&a, &b)| {
                let d = (a - b).abs();
                if d > m {
                    d
                } else {
                    m
                }
            })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<T: Scalar>(&self) -> Tensor4<T> {
        Tensor4 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .map(|&v| T::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }

    /// Size of the element buffer in bytes.
    pub fn nbytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<S>()
    }
}

/// Channel-blocked view produced by overlapped resampling:
/// `[n, w, h, blocks, block_size]`, block-major within each pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTensor<S> {
    pub pixels_dims: Dims4,
    pub blocks: usize,
    pub block_size: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> BlockTensor<S> {
    pub fn zeros(pixels_dims: Dims4, blocks: usize, block_size: usize) -> Self {
        let len = pixels_dims.n * pixels_dims.pixels() * blocks * block_size;
        Self {
            pixels_dims: pixels_dims.with_channels(blocks * block_size),
            blocks,
            block_size,
            data: vec![S::zero(); len],
        }
    }

    /// Block `i` at flattened pixel index `pixel`.
    pub fn block(&self, pixel: usize, i: usize) -> &[S] {
        let start = (pixel * self.blocks + i) * self.block_size;
        &self.data[start..start + self.block_size]
    }

    /// Flattens blocks back into a channel axis of `blocks * block_size`.
    pub fn into_tensor(self) -> Tensor4<S> {
        Tensor4 {
            dims: self.pixels_dims,
            data: self.data,
        }
    }
}
