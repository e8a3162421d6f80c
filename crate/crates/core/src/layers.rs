//! Trainable WHT layers.
//!
//! Five layer kinds share one shape: transform, smooth-threshold with the DC
//! coefficient passed through, inverse transform. All transforms use the
//! sequency-ordered orthonormal convention, so a forward/inverse pair
//! composes to the identity and the inverse is the transform itself.
//!
//! * `FwhtExpand`  - zero-pad the channels to `2^d >= tc`, one transform per
//!   fiber, truncate to `tc`.
//! * `FwhtProject` - pad to `2^p`, threshold, DC divided by `r = 2^(p-q)`,
//!   AC coefficients `1 ..= 2^p - r` average-pooled with window `r`, inverse
//!   transform at length `2^q`, truncate to `c`.
//! * `BwhtExpand`  - overlapped channel blocks of size `s` (see
//!   [`BlockIndexPlan`]), one threshold vector shared by all blocks.
//! * `BwhtProject` - contiguous blocks of size `s`, then feature-domain
//!   average pooling with window `t`.
//! * `Fwht2d`      - zero-pad width/height to powers of two, separable 2D
//!   transform, spatial thresholding (optionally weighted) with the DC value
//!   restored, inverse, crop, optional residual add.
//!
//! Backward passes rely on the transforms being symmetric.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WhtError};
use crate::factor::{scale_exact, serde_factor, Factor};
use crate::scalar::Scalar;
use crate::tensor::{BlockTensor, Dims4, Tensor4};
use crate::threshold::{kink_margin, threshold_slice, threshold_slice_backward, ThresholdGrads, ThresholdParams};
use crate::transform::{ceil_log2, log2_exact, NoCount, SpatialPlan, WalshPlan, WalshSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    FwhtExpand,
    FwhtProject,
    BwhtExpand,
    BwhtProject,
    #[serde(rename = "fwht-2d")]
    Fwht2d,
}

impl LayerKind {
    pub const ALL: [LayerKind; 5] = [
        LayerKind::FwhtExpand,
        LayerKind::FwhtProject,
        LayerKind::BwhtExpand,
        LayerKind::BwhtProject,
        LayerKind::Fwht2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::FwhtExpand => "fwht-expand",
            LayerKind::FwhtProject => "fwht-project",
            LayerKind::BwhtExpand => "bwht-expand",
            LayerKind::BwhtProject => "bwht-project",
            LayerKind::Fwht2d => "fwht-2d",
        }
    }
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn one() -> Factor {
    Factor::from_integer(1)
}

/// Full description of one WHT layer.
///
/// `expansion_factor` is always `out_channels / in_channels`, so projections
/// carry fractional factors such as `1/6`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub kind: LayerKind,
    pub in_channels: usize,
    #[serde(with = "serde_factor", default = "one")]
    pub expansion_factor: Factor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_size: Option<usize>,
    #[serde(default)]
    pub residual: bool,
    #[serde(default)]
    pub weighted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_dims: Option<(usize, usize)>,
}

impl LayerConfig {
    fn base(kind: LayerKind, in_channels: usize, expansion_factor: Factor) -> Self {
        Self {
            kind,
            in_channels,
            expansion_factor,
            block_size: None,
            residual: false,
            weighted: false,
            spatial_dims: None,
        }
    }

    /// `c -> t c` channels.
    pub fn fwht_expand(c: usize, t: Factor) -> Self {
        Self::base(LayerKind::FwhtExpand, c, t)
    }

    /// `tc -> tc / t` channels.
    pub fn fwht_project(tc: usize, t: Factor) -> Self {
        Self::base(LayerKind::FwhtProject, tc, t.recip())
    }

    pub fn bwht_expand(c: usize, block_size: usize, t: Factor) -> Self {
        Self {
            block_size: Some(block_size),
            ..Self::base(LayerKind::BwhtExpand, c, t)
        }
    }

    pub fn bwht_project(tc: usize, block_size: usize, t: Factor) -> Self {
        Self {
            block_size: Some(block_size),
            ..Self::base(LayerKind::BwhtProject, tc, t.recip())
        }
    }

    pub fn fwht_2d(w: usize, h: usize, c: usize, residual: bool, weighted: bool) -> Self {
        Self {
            residual,
            weighted,
            spatial_dims: Some((w, h)),
            ..Self::base(LayerKind::Fwht2d, c, one())
        }
    }

    pub fn out_channels(&self) -> Result<usize> {
        scale_exact(self.in_channels, self.expansion_factor)
    }

    /// Checks every structural invariant of the config.
    pub fn validate(&self) -> Result<()> {
        Geometry::new(self).map(|_| ())
    }

    pub fn output_dims(&self, input: Dims4) -> Result<Dims4> {
        let g = Geometry::new(self)?;
        g.check_input(input)?;
        Ok(input.with_channels(g.out_channels()))
    }
}

/// Start indices of the overlapped channel blocks used by `BwhtExpand`:
/// `K = floor(linspace(0, c - s, floor(t c / s)))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockIndexPlan {
    pub starts: Vec<usize>,
    pub block_size: usize,
    pub block_count: usize,
}

impl BlockIndexPlan {
    pub fn new(channels: usize, block_size: usize, t: Factor) -> Result<Self> {
        if block_size == 0 || block_size > channels {
            return Err(WhtError::BlockTooLarge {
                block: block_size,
                channels,
            });
        }
        let total = Factor::from_integer(channels) * t / Factor::from_integer(block_size);
        let block_count = total.to_integer();
        if block_count == 0 {
            return Err(WhtError::InvalidConfig(format!(
                "t*c/s = {total} leaves no block of size {block_size}"
            )));
        }
        let span = channels - block_size;
        // Exact integer evaluation of the floored linspace.
        let starts = if block_count == 1 {
            vec![0]
        } else {
            (0..block_count).map(|i| i * span / (block_count - 1)).collect()
        };
        Ok(Self {
            starts,
            block_size,
            block_count,
        })
    }
}

/// Copies overlapping channel windows `[K[i], K[i] + s)` into blocks.
pub fn resample<S: Scalar>(x: &Tensor4<S>, block_size: usize, t: Factor) -> Result<BlockTensor<S>> {
    let d = x.dims();
    let plan = BlockIndexPlan::new(d.c, block_size, t)?;
    let mut out = BlockTensor::zeros(d, plan.block_count, block_size);
    let s = block_size;
    for (fiber, dst) in x.fibers().zip(out.data.chunks_exact_mut(plan.block_count * s)) {
        for (blk, &k) in dst.chunks_exact_mut(s).zip(&plan.starts) {
            blk.copy_from_slice(&fiber[k..k + s]);
        }
    }
    Ok(out)
}

/// Trainable and replaced-convolution parameter counts of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub trainable: usize,
    pub comparison_conv: usize,
}

/// Trainable parameters of a layer and of the convolution it stands in for:
/// a 1x1 convolution `c_in * c_out` for the channel layers, a depth-preserving
/// 3x3 convolution `9 * c` for the 2D layer.
///
/// 1D layers store a frozen DC threshold that is not counted; the 2D layer
/// counts its redundant DC slot.
pub fn param_count(cfg: &LayerConfig) -> Result<ParamCount> {
    let g = Geometry::new(cfg)?;
    let trainable = match &g {
        Geometry::Spatial { pw, ph, .. } => {
            let n = pw * ph;
            if cfg.weighted {
                2 * n
            } else {
                n
            }
        }
        other => other.threshold_len() - 1,
    };
    let comparison_conv = match cfg.kind {
        LayerKind::Fwht2d => 9 * cfg.in_channels,
        _ => cfg.in_channels * g.out_channels(),
    };
    Ok(ParamCount {
        trainable,
        comparison_conv,
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Geometry {
    Expand {
        c: usize,
        tc: usize,
        plan: WalshPlan,
    },
    Project {
        tc: usize,
        c: usize,
        r: usize,
        plan_p: WalshPlan,
        plan_q: WalshPlan,
    },
    BlockExpand {
        c: usize,
        tc: usize,
        blocks: BlockIndexPlan,
        plan: WalshPlan,
    },
    BlockProject {
        tc: usize,
        c: usize,
        t: usize,
        plan: WalshPlan,
    },
    Spatial {
        w: usize,
        h: usize,
        c: usize,
        pw: usize,
        ph: usize,
        residual: bool,
        plan: SpatialPlan,
    },
}

fn block_plan(cfg: &LayerConfig) -> Result<(usize, WalshPlan)> {
    let s = cfg
        .block_size
        .ok_or_else(|| WhtError::InvalidConfig(format!("{} needs a block size", cfg.kind)))?;
    let order = log2_exact(s)?;
    Ok((s, WalshPlan::new(WalshSpec::layer(order))))
}

impl Geometry {
    fn new(cfg: &LayerConfig) -> Result<Self> {
        let c_in = cfg.in_channels;
        if c_in == 0 {
            return Err(WhtError::InvalidConfig("zero input channels".into()));
        }
        let f = cfg.expansion_factor;
        let one = Factor::from_integer(1);
        if cfg.kind != LayerKind::Fwht2d && (cfg.residual || cfg.weighted || cfg.spatial_dims.is_some()) {
            return Err(WhtError::InvalidConfig(format!(
                "residual/weighted/spatial_dims apply to fwht-2d only, not {}",
                cfg.kind
            )));
        }
        match cfg.kind {
            LayerKind::FwhtExpand => {
                if f < one {
                    return Err(WhtError::InvalidFactor(format!("expansion factor {f} < 1")));
                }
                let tc = scale_exact(c_in, f)?;
                let plan = WalshPlan::new(WalshSpec::layer(ceil_log2(tc)));
                Ok(Geometry::Expand { c: c_in, tc, plan })
            }
            LayerKind::FwhtProject => {
                if f > one {
                    return Err(WhtError::InvalidFactor(format!("projection factor {f} > 1")));
                }
                let c = scale_exact(c_in, f)?;
                let (p, q) = (ceil_log2(c_in), ceil_log2(c));
                Ok(Geometry::Project {
                    tc: c_in,
                    c,
                    r: 1 << (p - q),
                    plan_p: WalshPlan::new(WalshSpec::layer(p)),
                    plan_q: WalshPlan::new(WalshSpec::layer(q)),
                })
            }
            LayerKind::BwhtExpand => {
                if f < one {
                    return Err(WhtError::InvalidFactor(format!("expansion factor {f} < 1")));
                }
                let (s, plan) = block_plan(cfg)?;
                let tc = scale_exact(c_in, f)?;
                if tc % s != 0 {
                    return Err(WhtError::InvalidConfig(format!(
                        "output channels {tc} are not a multiple of the block size {s}"
                    )));
                }
                let blocks = BlockIndexPlan::new(c_in, s, f)?;
                Ok(Geometry::BlockExpand {
                    c: c_in,
                    tc,
                    blocks,
                    plan,
                })
            }
            LayerKind::BwhtProject => {
                let (s, plan) = block_plan(cfg)?;
                let t = f.recip();
                if !t.is_integer() || t < one {
                    return Err(WhtError::InvalidFactor(format!(
                        "block projection needs an integer pooling window, got 1/({f})"
                    )));
                }
                if c_in % s != 0 {
                    return Err(WhtError::InvalidConfig(format!(
                        "input channels {c_in} are not a multiple of the block size {s}"
                    )));
                }
                let c = scale_exact(c_in, f)?;
                Ok(Geometry::BlockProject {
                    tc: c_in,
                    c,
                    t: t.to_integer(),
                    plan,
                })
            }
            LayerKind::Fwht2d => {
                if f != one {
                    return Err(WhtError::InvalidFactor(format!("fwht-2d keeps channels, got factor {f}")));
                }
                let (w, h) = cfg
                    .spatial_dims
                    .ok_or_else(|| WhtError::InvalidConfig("fwht-2d needs spatial_dims".into()))?;
                if w == 0 || h == 0 {
                    return Err(WhtError::InvalidConfig("empty spatial dims".into()));
                }
                let (p, q) = (ceil_log2(w), ceil_log2(h));
                Ok(Geometry::Spatial {
                    w,
                    h,
                    c: c_in,
                    pw: 1 << p,
                    ph: 1 << q,
                    residual: cfg.residual,
                    plan: SpatialPlan::new(WalshSpec::layer(p), WalshSpec::layer(q)),
                })
            }
        }
    }

    fn in_channels(&self) -> usize {
        match self {
            Geometry::Expand { c, .. } | Geometry::BlockExpand { c, .. } | Geometry::Spatial { c, .. } => *c,
            Geometry::Project { tc, .. } | Geometry::BlockProject { tc, .. } => *tc,
        }
    }

    fn out_channels(&self) -> usize {
        match self {
            Geometry::Expand { tc, .. } | Geometry::BlockExpand { tc, .. } => *tc,
            Geometry::Project { c, .. } | Geometry::BlockProject { c, .. } | Geometry::Spatial { c, .. } => *c,
        }
    }

    /// Length of the stored threshold vector.
    fn threshold_len(&self) -> usize {
        match self {
            Geometry::Expand { plan, .. } => plan.len(),
            Geometry::Project { plan_p, .. } => plan_p.len(),
            Geometry::BlockExpand { plan, .. } | Geometry::BlockProject { plan, .. } => plan.len(),
            Geometry::Spatial { pw, ph, .. } => pw * ph,
        }
    }

    /// Elements of the saved transform-domain coefficients per pixel (1D) or
    /// per batch item (2D).
    fn tape_len(&self) -> usize {
        match self {
            Geometry::Expand { plan, .. } => plan.len(),
            Geometry::Project { plan_p, .. } => plan_p.len(),
            Geometry::BlockExpand { tc, .. } => *tc,
            Geometry::BlockProject { tc, .. } => *tc,
            Geometry::Spatial { pw, ph, c, .. } => pw * ph * c,
        }
    }

    fn check_input(&self, d: Dims4) -> Result<()> {
        if d.c != self.in_channels() {
            return Err(WhtError::ShapeMismatch(format!(
                "layer expects {} channels, input is {d}",
                self.in_channels()
            )));
        }
        if let Geometry::Spatial { w, h, .. } = self {
            if (d.w, d.h) != (*w, *h) {
                return Err(WhtError::ShapeMismatch(format!(
                    "layer expects {w}x{h} spatial dims, input is {d}"
                )));
            }
        }
        Ok(())
    }

    fn scratch_len(&self) -> usize {
        match self {
            Geometry::Spatial { pw, ph, c, .. } => 3 * pw * ph * c,
            Geometry::Project { plan_p, .. } => 4 * plan_p.len(),
            other => 3 * other.tape_len(),
        }
    }

    // ---- forward kernels, one batch item at a time ----

    fn forward_item<S: Scalar>(&self, params: &ThresholdParams<S>, x: &[S], out: &mut [S], tape: &mut [S], work: &mut [S]) {
        match self {
            Geometry::Expand { c, tc, plan } => {
                let l = plan.len();
                let (buf, rest) = work.split_at_mut(l);
                let scratch = &mut rest[..l];
                for ((fin, fout), ys) in x.chunks_exact(*c).zip(out.chunks_exact_mut(*tc)).zip(tape.chunks_exact_mut(l)) {
                    buf[..*c].copy_from_slice(fin);
                    buf[*c..].fill(S::zero());
                    plan.apply(buf, scratch);
                    ys.copy_from_slice(buf);
                    threshold_slice(ys, buf, params, 1);
                    plan.apply(buf, scratch);
                    fout.copy_from_slice(&buf[..*tc]);
                }
            }
            Geometry::Project {
                tc,
                c,
                r,
                plan_p,
                plan_q,
            } => {
                let (pl, ql) = (plan_p.len(), plan_q.len());
                let (buf, rest) = work.split_at_mut(pl);
                let (sbuf, rest) = rest.split_at_mut(pl);
                let (qbuf, rest) = rest.split_at_mut(ql);
                let scratch = &mut rest[..pl];
                let inv_r = S::from_usize_lossy(*r).recip();
                for ((fin, fout), ys) in x.chunks_exact(*tc).zip(out.chunks_exact_mut(*c)).zip(tape.chunks_exact_mut(pl)) {
                    buf[..*tc].copy_from_slice(fin);
                    buf[*tc..].fill(S::zero());
                    plan_p.apply(buf, scratch);
                    ys.copy_from_slice(buf);
                    threshold_slice(ys, sbuf, params, 1);
                    qbuf[0] = ys[0] * inv_r;
                    for (j, q) in qbuf[1..].iter_mut().enumerate() {
                        let window = &sbuf[1 + j * r..1 + (j + 1) * r];
                        *q = window.iter().copied().sum::<S>() * inv_r;
                    }
                    plan_q.apply(qbuf, scratch);
                    fout.copy_from_slice(&qbuf[..*c]);
                }
            }
            Geometry::BlockExpand { c, tc, blocks, plan } => {
                let s = plan.len();
                let scratch = &mut work[..s];
                for ((fin, fout), ys) in x.chunks_exact(*c).zip(out.chunks_exact_mut(*tc)).zip(tape.chunks_exact_mut(*tc)) {
                    for (blk, &k) in fout.chunks_exact_mut(s).zip(&blocks.starts) {
                        blk.copy_from_slice(&fin[k..k + s]);
                        plan.apply(blk, scratch);
                    }
                    ys.copy_from_slice(fout);
                    threshold_slice(ys, fout, params, 1);
                    for blk in fout.chunks_exact_mut(s) {
                        plan.apply(blk, scratch);
                    }
                }
            }
            Geometry::BlockProject { tc, c, t, plan } => {
                let s = plan.len();
                let (buf, rest) = work.split_at_mut(*tc);
                let scratch = &mut rest[..s];
                let inv_t = S::from_usize_lossy(*t).recip();
                for ((fin, fout), ys) in x.chunks_exact(*tc).zip(out.chunks_exact_mut(*c)).zip(tape.chunks_exact_mut(*tc)) {
                    buf.copy_from_slice(fin);
                    for blk in buf.chunks_exact_mut(s) {
                        plan.apply(blk, scratch);
                    }
                    ys.copy_from_slice(buf);
                    threshold_slice(ys, buf, params, 1);
                    for blk in buf.chunks_exact_mut(s) {
                        plan.apply(blk, scratch);
                    }
                    for (o, window) in fout.iter_mut().zip(buf.chunks_exact(*t)) {
                        *o = window.iter().copied().sum::<S>() * inv_t;
                    }
                }
            }
            Geometry::Spatial {
                w,
                h,
                c,
                pw,
                ph,
                residual,
                plan,
            } => {
                let len = pw * ph * c;
                let (buf, rest) = work.split_at_mut(len);
                let scratch = &mut rest[..len];
                pad_spatial(x, buf, *w, *h, *ph, *c);
                plan.apply(buf, *c, scratch, &mut NoCount);
                tape.copy_from_slice(buf);
                // DC is masked, which restores its pre-threshold value.
                threshold_slice(tape, buf, params, *c);
                plan.apply(buf, *c, scratch, &mut NoCount);
                crop_spatial(buf, out, *w, *h, *ph, *c);
                if *residual {
                    for (o, &v) in out.iter_mut().zip(x) {
                        *o = *o + v;
                    }
                }
            }
        }
    }

    // ---- backward kernels ----

    #[allow(clippy::too_many_arguments)]
    fn backward_item<S: Scalar>(
        &self,
        params: &ThresholdParams<S>,
        grad_out: &[S],
        tape: &[S],
        grad_in: &mut [S],
        work: &mut [S],
        grads: &mut ThresholdGrads<S>,
    ) {
        match self {
            Geometry::Expand { c, tc, plan } => {
                let l = plan.len();
                let (buf, rest) = work.split_at_mut(l);
                let (gy, rest) = rest.split_at_mut(l);
                let scratch = &mut rest[..l];
                for ((g, ys), gi) in grad_out.chunks_exact(*tc).zip(tape.chunks_exact(l)).zip(grad_in.chunks_exact_mut(*c)) {
                    buf[..*tc].copy_from_slice(g);
                    buf[*tc..].fill(S::zero());
                    plan.apply(buf, scratch);
                    threshold_slice_backward(ys, buf, gy, params, 1, grads);
                    plan.apply(gy, scratch);
                    gi.copy_from_slice(&gy[..*c]);
                }
            }
            Geometry::Project {
                tc,
                c,
                r,
                plan_p,
                plan_q,
            } => {
                let (pl, ql) = (plan_p.len(), plan_q.len());
                let (gs, rest) = work.split_at_mut(pl);
                let (gy, rest) = rest.split_at_mut(pl);
                let (qbuf, rest) = rest.split_at_mut(ql);
                let scratch = &mut rest[..pl];
                let inv_r = S::from_usize_lossy(*r).recip();
                for ((g, ys), gi) in grad_out.chunks_exact(*c).zip(tape.chunks_exact(pl)).zip(grad_in.chunks_exact_mut(*tc)) {
                    qbuf[..*c].copy_from_slice(g);
                    qbuf[*c..].fill(S::zero());
                    plan_q.apply(qbuf, scratch);
                    gs.fill(S::zero());
                    gs[0] = qbuf[0] * inv_r;
                    for (j, &q) in qbuf[1..].iter().enumerate() {
                        gs[1 + j * r..1 + (j + 1) * r].fill(q * inv_r);
                    }
                    threshold_slice_backward(ys, gs, gy, params, 1, grads);
                    plan_p.apply(gy, scratch);
                    gi.copy_from_slice(&gy[..*tc]);
                }
            }
            Geometry::BlockExpand { c, tc, blocks, plan } => {
                let s = plan.len();
                let (buf, rest) = work.split_at_mut(*tc);
                let (gy, rest) = rest.split_at_mut(*tc);
                let scratch = &mut rest[..s];
                for ((g, ys), gi) in grad_out.chunks_exact(*tc).zip(tape.chunks_exact(*tc)).zip(grad_in.chunks_exact_mut(*c)) {
                    buf.copy_from_slice(g);
                    for blk in buf.chunks_exact_mut(s) {
                        plan.apply(blk, scratch);
                    }
                    threshold_slice_backward(ys, buf, gy, params, 1, grads);
                    gi.fill(S::zero());
                    for (blk, &k) in gy.chunks_exact_mut(s).zip(&blocks.starts) {
                        plan.apply(blk, scratch);
                        for (dst, &v) in gi[k..k + s].iter_mut().zip(blk.iter()) {
                            *dst = *dst + v;
                        }
                    }
                }
            }
            Geometry::BlockProject { tc, c, t, plan } => {
                let s = plan.len();
                let (buf, rest) = work.split_at_mut(*tc);
                let (gy, rest) = rest.split_at_mut(*tc);
                let scratch = &mut rest[..s];
                let inv_t = S::from_usize_lossy(*t).recip();
                for ((g, ys), gi) in grad_out.chunks_exact(*c).zip(tape.chunks_exact(*tc)).zip(grad_in.chunks_exact_mut(*tc)) {
                    for (window, &gv) in buf.chunks_exact_mut(*t).zip(g) {
                        window.fill(gv * inv_t);
                    }
                    for blk in buf.chunks_exact_mut(s) {
                        plan.apply(blk, scratch);
                    }
                    threshold_slice_backward(ys, buf, gy, params, 1, grads);
                    for blk in gy.chunks_exact_mut(s) {
                        plan.apply(blk, scratch);
                    }
                    gi.copy_from_slice(gy);
                }
            }
            Geometry::Spatial {
                w,
                h,
                c,
                ph,
                residual,
                plan,
                ..
            } => {
                let len = tape.len();
                let (buf, rest) = work.split_at_mut(len);
                let (gy, rest) = rest.split_at_mut(len);
                let scratch = &mut rest[..len];
                pad_spatial(grad_out, buf, *w, *h, *ph, *c);
                plan.apply(buf, *c, scratch, &mut NoCount);
                threshold_slice_backward(tape, buf, gy, params, *c, grads);
                plan.apply(gy, *c, scratch, &mut NoCount);
                crop_spatial(gy, grad_in, *w, *h, *ph, *c);
                if *residual {
                    for (gi, &g) in grad_in.iter_mut().zip(grad_out) {
                        *gi = *gi + g;
                    }
                }
            }
        }
    }
}

/// Copies a `[w, h, c]` item into the origin corner of a zeroed `[pw, ph, c]` buffer.
fn pad_spatial<S: Scalar>(src: &[S], dst: &mut [S], w: usize, h: usize, ph: usize, c: usize) {
    dst.fill(S::zero());
    for x in 0..w {
        dst[x * ph * c..(x * ph + h) * c].copy_from_slice(&src[x * h * c..(x + 1) * h * c]);
    }
}

fn crop_spatial<S: Scalar>(src: &[S], dst: &mut [S], w: usize, h: usize, ph: usize, c: usize) {
    for x in 0..w {
        dst[x * h * c..(x + 1) * h * c].copy_from_slice(&src[x * ph * c..(x * ph + h) * c]);
    }
}

/// Forward intermediates of one WHT layer: the pre-threshold transform-domain
/// coefficients of every fiber (1D kinds) or item (2D).
#[derive(Debug, Clone)]
pub struct WhtTape<S> {
    pub input_dims: Dims4,
    pub coefficients: Vec<S>,
}

/// A WHT layer with its threshold state.
#[derive(Debug, Clone)]
pub struct WhtLayer<S> {
    config: LayerConfig,
    geometry: Geometry,
    params: ThresholdParams<S>,
}

impl<S: Scalar> WhtLayer<S> {
    /// Layer with seeded threshold initialization.
    pub fn new<R: Rng + ?Sized>(config: LayerConfig, rng: &mut R) -> Result<Self> {
        let geometry = Geometry::new(&config)?;
        let params = ThresholdParams::initialized(geometry.threshold_len(), &[0], config.weighted, rng);
        Ok(Self {
            config,
            geometry,
            params,
        })
    }

    pub fn with_params(config: LayerConfig, params: ThresholdParams<S>) -> Result<Self> {
        let geometry = Geometry::new(&config)?;
        params.validate()?;
        if params.len() != geometry.threshold_len() {
            return Err(WhtError::LengthMismatch {
                expected: geometry.threshold_len(),
                actual: params.len(),
            });
        }
        if params.is_weighted() != config.weighted {
            return Err(WhtError::InvalidConfig("weight vector presence disagrees with config".into()));
        }
        if !params.dc_mask.first().copied().unwrap_or(false) {
            return Err(WhtError::InvalidConfig("the DC slot must be masked".into()));
        }
        Ok(Self {
            config,
            geometry,
            params,
        })
    }

    /// Zero thresholds (and unit weights when weighted).
    pub fn with_zero_thresholds(config: LayerConfig) -> Result<Self> {
        let len = Geometry::new(&config)?.threshold_len();
        Self::with_params(config.clone(), ThresholdParams::zeros(len, &[0], config.weighted))
    }

    pub fn config(&self) -> &LayerConfig {
        &self.config
    }

    pub fn params(&self) -> &ThresholdParams<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ThresholdParams<S> {
        &mut self.params
    }

    pub fn out_channels(&self) -> usize {
        self.geometry.out_channels()
    }

    /// Threshold slots excluded from training (the 1D DC slot).
    pub fn frozen_thresholds(&self) -> Vec<bool> {
        let mut mask = vec![false; self.params.len()];
        if self.config.kind != LayerKind::Fwht2d {
            mask[0] = true;
        }
        mask
    }

    pub fn param_count(&self) -> ParamCount {
        param_count(&self.config).expect("config validated at construction")
    }

    pub fn output_dims(&self, input: Dims4) -> Result<Dims4> {
        self.geometry.check_input(input)?;
        Ok(input.with_channels(self.geometry.out_channels()))
    }

    /// Distance of the closest thresholded coefficient in `tape` to its kink.
    pub fn kink_margin(&self, tape: &WhtTape<S>) -> Option<S> {
        let lanes = match self.geometry {
            Geometry::Spatial { c, .. } => c,
            _ => 1,
        };
        kink_margin(&tape.coefficients, &self.params, lanes)
    }

    fn item_lens(&self, d: Dims4) -> (usize, usize, usize) {
        let pixels = d.pixels();
        let tape = match self.geometry {
            Geometry::Spatial { .. } => self.geometry.tape_len(),
            _ => pixels * self.geometry.tape_len(),
        };
        (pixels * d.c, pixels * self.geometry.out_channels(), tape)
    }

    pub fn forward(&self, x: &Tensor4<S>) -> Result<(Tensor4<S>, WhtTape<S>)> {
        let out_dims = self.output_dims(x.dims())?;
        let d = x.dims();
        let mut out = Tensor4::zeros(out_dims);
        let (in_len, out_len, tape_len) = self.item_lens(d);
        let mut coefficients = vec![S::zero(); d.n * tape_len];
        if d.n > 0 && in_len > 0 {
            let scratch_len = self.geometry.scratch_len();
            x.data()
                .par_chunks(in_len)
                .zip(out.data_mut().par_chunks_mut(out_len))
                .zip(coefficients.par_chunks_mut(tape_len))
                .for_each_init(
                    || vec![S::zero(); scratch_len],
                    |work, ((xi, oi), ti)| self.geometry.forward_item(&self.params, xi, oi, ti, work),
                );
        }
        Ok((
            out,
            WhtTape {
                input_dims: d,
                coefficients,
            },
        ))
    }

    /// Input gradient and threshold gradients. Per-item parameter gradients
    /// are reduced in batch order, so results do not depend on the thread count.
    pub fn backward(&self, tape: &WhtTape<S>, grad_out: &Tensor4<S>) -> Result<(Tensor4<S>, ThresholdGrads<S>)> {
        let d = tape.input_dims;
        let out_dims = self.output_dims(d)?;
        if grad_out.dims() != out_dims {
            return Err(WhtError::ShapeMismatch(format!(
                "gradient {} vs layer output {out_dims}",
                grad_out.dims()
            )));
        }
        let mut grad_in = Tensor4::zeros(d);
        let mut total = ThresholdGrads::zeros_like(&self.params);
        let (in_len, out_len, tape_len) = self.item_lens(d);
        if d.n == 0 || in_len == 0 {
            return Ok((grad_in, total));
        }
        let scratch_len = self.geometry.scratch_len();
        let per_item: Vec<ThresholdGrads<S>> = grad_out
            .data()
            .par_chunks(out_len)
            .zip(tape.coefficients.par_chunks(tape_len))
            .zip(grad_in.data_mut().par_chunks_mut(in_len))
            .map_init(
                || vec![S::zero(); scratch_len],
                |work, ((g, t), gi)| {
                    let mut grads = ThresholdGrads::zeros_like(&self.params);
                    self.geometry.backward_item(&self.params, g, t, gi, work, &mut grads);
                    grads
                },
            )
            .collect();
        for g in per_item {
            for (a, b) in total.d_thresholds.iter_mut().zip(&g.d_thresholds) {
                *a = *a + *b;
            }
            if let (Some(tw), Some(gw)) = (&mut total.d_weights, &g.d_weights) {
                for (a, b) in tw.iter_mut().zip(gw) {
                    *a = *a + *b;
                }
            }
        }
        Ok((grad_in, total))
    }
}

fn run<S: Scalar>(cfg: LayerConfig, x: &Tensor4<S>, params: &ThresholdParams<S>) -> Result<(Tensor4<S>, WhtTape<S>)> {
    WhtLayer::with_params(cfg, params.clone())?.forward(x)
}

/// FWHT layer for channel expansion, `c -> t c`.
pub fn fwht_expand<S: Scalar>(x: &Tensor4<S>, t: Factor, params: &ThresholdParams<S>) -> Result<(Tensor4<S>, WhtTape<S>)> {
    run(LayerConfig::fwht_expand(x.dims().c, t), x, params)
}

/// FWHT layer for channel projection, `tc -> tc / t`.
pub fn fwht_project<S: Scalar>(x: &Tensor4<S>, t: Factor, params: &ThresholdParams<S>) -> Result<(Tensor4<S>, WhtTape<S>)> {
    run(LayerConfig::fwht_project(x.dims().c, t), x, params)
}

/// Block WHT layer for channel expansion with overlapped resampling.
pub fn bwht_expand<S: Scalar>(
    x: &Tensor4<S>,
    block_size: usize,
    t: Factor,
    params: &ThresholdParams<S>,
) -> Result<(Tensor4<S>, WhtTape<S>)> {
    run(LayerConfig::bwht_expand(x.dims().c, block_size, t), x, params)
}

/// Block WHT layer for channel projection with feature-domain pooling.
pub fn bwht_project<S: Scalar>(
    x: &Tensor4<S>,
    block_size: usize,
    t: Factor,
    params: &ThresholdParams<S>,
) -> Result<(Tensor4<S>, WhtTape<S>)> {
    run(LayerConfig::bwht_project(x.dims().c, block_size, t), x, params)
}

/// 2D-FWHT layer described by `cfg`.
pub fn fwht2d_layer<S: Scalar>(x: &Tensor4<S>, cfg: &LayerConfig, params: &ThresholdParams<S>) -> Result<(Tensor4<S>, WhtTape<S>)> {
    if cfg.kind != LayerKind::Fwht2d {
        return Err(WhtError::InvalidConfig(format!("expected fwht-2d, got {}", cfg.kind)));
    }
    run(cfg.clone(), x, params)
}
