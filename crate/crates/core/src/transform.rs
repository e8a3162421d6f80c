//! Walsh-Hadamard transforms.
//!
//! Natural (Sylvester) Hadamard order and sequency-ordered Walsh matrices,
//! plus fast transforms built from add/subtract butterflies. The fast path
//! always runs the natural-order butterfly network and, for sequency order,
//! applies an output index permutation afterwards.
//!
//! Every kernel is generic over an [`OpCounter`] so the same code path can be
//! timed uninstrumented or replayed with exact operation counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WhtError};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

/// Largest order accepted by the dense matrix constructors (65536 x 65536).
pub const MAX_DENSE_ORDER: u32 = 16;

/// Row ordering of the transform matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Ordering {
    /// Natural order from the Sylvester recursion.
    Hadamard,
    /// Rows sorted by number of sign changes.
    #[default]
    WalshSequency,
}

/// Output scaling applied after the butterflies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Plain `W x`.
    None,
    /// `W x / sqrt(m)`; an involution.
    #[default]
    Orthonormal,
    /// `W x / m`; inverse of the unnormalized transform.
    Inverse,
}

/// Transform order, ordering convention and normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WalshSpec {
    pub order: u32,
    pub ordering: Ordering,
    pub normalization: Normalization,
}

impl WalshSpec {
    pub const fn new(order: u32, ordering: Ordering, normalization: Normalization) -> Self {
        Self {
            order,
            ordering,
            normalization,
        }
    }

    /// Spec for a transform of length `len`, which must be a power of two.
    pub fn for_len(len: usize, ordering: Ordering, normalization: Normalization) -> Result<Self> {
        Ok(Self::new(log2_exact(len)?, ordering, normalization))
    }

    /// Sequency-ordered orthonormal transform, the convention used by the layers.
    pub fn layer(order: u32) -> Self {
        Self::new(order, Ordering::WalshSequency, Normalization::Orthonormal)
    }

    /// Transform length `m = 2^k`.
    pub const fn len(&self) -> usize {
        1usize << self.order
    }

    pub fn scale<S: Scalar>(&self) -> S {
        let m = S::from_usize_lossy(self.len());
        match self.normalization {
            Normalization::None => S::one(),
            Normalization::Orthonormal => m.sqrt().recip(),
            Normalization::Inverse => m.recip(),
        }
    }
}

/// `log2(len)` when `len` is a positive power of two.
pub fn log2_exact(len: usize) -> Result<u32> {
    if len == 0 || !len.is_power_of_two() {
        return Err(WhtError::NotPowerOfTwo(len));
    }
    Ok(len.trailing_zeros())
}

/// Smallest `k` with `2^k >= n` (and `k = 0` for `n <= 1`).
pub fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

// ----------------------------------------------------------------------------
// Operation counting

/// Sink for arithmetic operation counts emitted by the kernels.
pub trait OpCounter {
    fn additions(&mut self, n: u64);
    fn multiplications(&mut self, n: u64);
    /// Multiplications by the normalization constant.
    fn scalings(&mut self, n: u64);
}

/// Counter that discards everything; compiles to nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoCount;

impl OpCounter for NoCount {
    #[inline(always)]
    fn additions(&mut self, _: u64) {}
    #[inline(always)]
    fn multiplications(&mut self, _: u64) {}
    #[inline(always)]
    fn scalings(&mut self, _: u64) {}
}

/// Exact tallies of additions/subtractions, multiplications and
/// normalization scalings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub additions: u64,
    pub multiplications: u64,
    pub scalings: u64,
}

impl OpCounter for OpCount {
    #[inline(always)]
    fn additions(&mut self, n: u64) {
        self.additions += n;
    }
    #[inline(always)]
    fn multiplications(&mut self, n: u64) {
        self.multiplications += n;
    }
    #[inline(always)]
    fn scalings(&mut self, n: u64) {
        self.scalings += n;
    }
}

impl std::ops::AddAssign for OpCount {
    fn add_assign(&mut self, rhs: Self) {
        self.additions += rhs.additions;
        self.multiplications += rhs.multiplications;
        self.scalings += rhs.scalings;
    }
}

// ----------------------------------------------------------------------------
// Dense matrices and permutations

/// Square matrix with entries in {+1, -1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseBinaryMatrix {
    order: usize,
    entries: Vec<i8>,
}

impl DenseBinaryMatrix {
    /// Number of rows (and columns).
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.entries[i * self.order + j]
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.entries[i * self.order..(i + 1) * self.order]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i8]> {
        self.entries.chunks_exact(self.order)
    }

    /// Number of sign changes along row `i`.
    pub fn sign_changes(&self, i: usize) -> usize {
        self.row(i).windows(2).filter(|p| p[0] != p[1]).count()
    }

    /// Matrix with its rows reordered so that new row `j` is old row `perm[j]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.order);
        let mut entries = Vec::with_capacity(self.entries.len());
        for &src in perm {
            entries.extend_from_slice(self.row(src));
        }
        Self {
            order: self.order,
            entries,
        }
    }

    pub fn transpose(&self) -> Self {
        let m = self.order;
        let mut entries = vec![0i8; m * m];
        for i in 0..m {
            for j in 0..m {
                entries[j * m + i] = self.get(i, j);
            }
        }
        Self { order: m, entries }
    }

    /// Reference `M x` by dense multiply-accumulate.
    pub fn mul_vec<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        self.mul_vec_counted(x, &mut NoCount)
    }

    pub fn mul_vec_counted<S: Scalar, C: OpCounter>(&self, x: &[S], counter: &mut C) -> Vec<S> {
        assert_eq!(x.len(), self.order);
        self.rows()
            .map(|row| {
                let mut acc = S::zero();
                for (&e, &v) in row.iter().zip(x) {
                    acc = acc + S::from_f64_lossy(f64::from(e)) * v;
                }
                counter.multiplications(self.order as u64);
                counter.additions(self.order as u64);
                acc
            })
            .collect()
    }

    /// Plain-text dump, one row per line of space separated `+1`/`-1`.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.entries.len() * 3);
        for row in self.rows() {
            let line: Vec<&str> = row.iter().map(|&e| if e > 0 { "+1" } else { "-1" }).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Reverses the lowest `bits` bits of `i`.
#[inline]
pub fn bit_reverse(i: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Binary-reflected Gray code of `i`.
#[inline]
pub fn gray_code(i: usize) -> usize {
    i ^ (i >> 1)
}

/// The two index permutations that map natural Hadamard rows to sequency rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationPair {
    pub bit_reversal: Vec<usize>,
    pub gray_code: Vec<usize>,
}

/// Order in which the two permutations of [`PermutationPair`] are composed on
/// the sequency row index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Composition {
    /// `row j <- H[bit_reversal[gray_code[j]]]`
    GrayThenBitReversal,
    /// `row j <- H[gray_code[bit_reversal[j]]]`
    BitReversalThenGray,
}

impl PermutationPair {
    pub fn new(order: u32) -> Self {
        let m = 1usize << order;
        Self {
            bit_reversal: (0..m).map(|i| bit_reverse(i, order)).collect(),
            gray_code: (0..m).map(gray_code).collect(),
        }
    }

    /// Source Hadamard row for every sequency row under `composition`.
    pub fn compose(&self, composition: Composition) -> Vec<usize> {
        match composition {
            Composition::GrayThenBitReversal => {
                self.gray_code.iter().map(|&g| self.bit_reversal[g]).collect()
            }
            Composition::BitReversalThenGray => {
                self.bit_reversal.iter().map(|&b| self.gray_code[b]).collect()
            }
        }
    }
}

/// Composition that yields monotone sequency (row `j` has `j` sign changes).
/// Pinned by the exhaustive sequency tests.
pub const SEQUENCY_COMPOSITION: Composition = Composition::GrayThenBitReversal;

/// Sequency permutation for order `k`: entry `j` is the natural row index of
/// sequency row `j`.
pub fn sequency_permutation(order: u32) -> Vec<usize> {
    PermutationPair::new(order).compose(SEQUENCY_COMPOSITION)
}

fn check_dense_order(order: u32) -> Result<()> {
    if order > MAX_DENSE_ORDER {
        return Err(WhtError::OrderTooLarge {
            order,
            max: MAX_DENSE_ORDER,
        });
    }
    Ok(())
}

/// Natural-order Hadamard matrix `H_k` from the Sylvester recursion
/// `H_k = [[H, H], [H, -H]]`.
pub fn hadamard_matrix(order: u32) -> Result<DenseBinaryMatrix> {
    check_dense_order(order)?;
    let mut h = DenseBinaryMatrix {
        order: 1,
        entries: vec![1],
    };
    for _ in 0..order {
        let m = h.order;
        let mut entries = vec![0i8; 4 * m * m];
        for i in 0..m {
            for j in 0..m {
                let e = h.get(i, j);
                entries[i * 2 * m + j] = e;
                entries[i * 2 * m + j + m] = e;
                entries[(i + m) * 2 * m + j] = e;
                entries[(i + m) * 2 * m + j + m] = -e;
            }
        }
        h = DenseBinaryMatrix {
            order: 2 * m,
            entries,
        };
    }
    Ok(h)
}

/// Sequency-ordered Walsh matrix `W_k`: rows of `H_k` shuffled by the
/// bit-reversal and Gray-code permutations.
pub fn walsh_matrix(order: u32) -> Result<DenseBinaryMatrix> {
    let h = hadamard_matrix(order)?;
    Ok(h.permute_rows(&sequency_permutation(order)))
}

/// Dense matrix for `ordering` (unscaled).
pub fn dense_matrix(order: u32, ordering: Ordering) -> Result<DenseBinaryMatrix> {
    match ordering {
        Ordering::Hadamard => hadamard_matrix(order),
        Ordering::WalshSequency => walsh_matrix(order),
    }
}

// ----------------------------------------------------------------------------
// Fast transforms

/// Precomputed permutation and scale for one transform spec.
#[derive(Debug, Clone, PartialEq)]
pub struct WalshPlan {
    spec: WalshSpec,
    permutation: Option<Vec<usize>>,
}

impl WalshPlan {
    pub fn new(spec: WalshSpec) -> Self {
        let permutation = match spec.ordering {
            Ordering::Hadamard => None,
            Ordering::WalshSequency if spec.order > 0 => Some(sequency_permutation(spec.order)),
            Ordering::WalshSequency => None,
        };
        Self { spec, permutation }
    }

    pub fn spec(&self) -> WalshSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.spec.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Transforms `m` equally sized contiguous slabs of `data` as a length-`m`
    /// transform whose elements are slabs of `data.len() / m` lanes. A slab of
    /// one lane is an ordinary vector transform.
    ///
    /// `scratch` must hold at least `data.len()` elements when the plan
    /// permutes its output; it is untouched otherwise.
    pub fn apply_slabs<S: Scalar, C: OpCounter>(
        &self,
        data: &mut [S],
        scratch: &mut [S],
        scale: bool,
        counter: &mut C,
    ) {
        let m = self.len();
        debug_assert_eq!(data.len() % m, 0);
        let lanes = data.len() / m;
        butterflies(data, m, lanes, counter);
        if let Some(perm) = &self.permutation {
            let scratch = &mut scratch[..data.len()];
            scratch.copy_from_slice(data);
            for (dst, &src) in data.chunks_exact_mut(lanes).zip(perm) {
                dst.copy_from_slice(&scratch[src * lanes..(src + 1) * lanes]);
            }
        }
        if scale && self.spec.normalization != Normalization::None {
            let s: S = self.spec.scale();
            for v in data.iter_mut() {
                *v = *v * s;
            }
            counter.scalings(data.len() as u64);
        }
    }

    /// In-place transform of one vector of length `m`.
    pub fn apply<S: Scalar>(&self, x: &mut [S], scratch: &mut [S]) {
        self.apply_slabs(x, scratch, true, &mut NoCount);
    }
}

/// Natural-order unnormalized butterflies over `m` slabs of `lanes` elements.
/// Performs exactly `m * log2(m) * lanes` additions/subtractions.
#[inline]
fn butterflies<S: Scalar, C: OpCounter>(data: &mut [S], m: usize, lanes: usize, counter: &mut C) {
    let mut half = 1;
    while half < m {
        let span = 2 * half * lanes;
        for block in data.chunks_exact_mut(span) {
            let (lo, hi) = block.split_at_mut(half * lanes);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
            counter.additions(2 * (half * lanes) as u64);
        }
        half *= 2;
    }
}

fn check_len(len: usize, spec: &WalshSpec) -> Result<()> {
    if len == 0 || !len.is_power_of_two() {
        return Err(WhtError::NotPowerOfTwo(len));
    }
    if len != spec.len() {
        return Err(WhtError::LengthMismatch {
            expected: spec.len(),
            actual: len,
        });
    }
    Ok(())
}

/// Fast transform of a single vector.
pub fn fwht_1d<S: Scalar>(x: &[S], spec: WalshSpec) -> Result<Vec<S>> {
    check_len(x.len(), &spec)?;
    let plan = WalshPlan::new(spec);
    let mut out = x.to_vec();
    let mut scratch = vec![S::zero(); out.len()];
    plan.apply(&mut out, &mut scratch);
    Ok(out)
}

/// Transform along the channel axis of one batch item.
fn channels_item<S: Scalar, C: OpCounter>(
    item: &mut [S],
    plan: &WalshPlan,
    scratch: &mut [S],
    counter: &mut C,
) {
    for fiber in item.chunks_exact_mut(plan.len()) {
        plan.apply_slabs(fiber, scratch, true, counter);
    }
}

/// Plans for a separable transform over the spatial axes of items laid out
/// as `[w, h, c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialPlan {
    pub width: WalshPlan,
    pub height: WalshPlan,
}

impl SpatialPlan {
    pub fn new(spec_w: WalshSpec, spec_h: WalshSpec) -> Self {
        Self {
            width: WalshPlan::new(spec_w),
            height: WalshPlan::new(spec_h),
        }
    }

    /// Transforms one `[w, h, c]` item in place. Each pass runs butterflies
    /// over contiguous slabs; `scratch` must hold `item.len()` elements.
    pub fn apply<S: Scalar, C: OpCounter>(&self, item: &mut [S], channels: usize, scratch: &mut [S], counter: &mut C) {
        let h = self.height.len();
        // Width axis: w slabs of h*c lanes.
        self.width.apply_slabs(item, scratch, false, counter);
        // Height axis: for each x, h slabs of c lanes.
        for row in item.chunks_exact_mut(h * channels) {
            self.height.apply_slabs(row, scratch, false, counter);
        }
        let s = self.width.spec.scale::<S>() * self.height.spec.scale::<S>();
        if s != S::one() {
            for v in item.iter_mut() {
                *v = *v * s;
            }
            counter.scalings(item.len() as u64);
        }
    }
}

fn check_channels<S: Scalar>(t: &Tensor4<S>, spec: &WalshSpec) -> Result<()> {
    check_len(t.dims().c, spec)
}

fn check_spatial<S: Scalar>(t: &Tensor4<S>, spec_w: &WalshSpec, spec_h: &WalshSpec) -> Result<()> {
    let d = t.dims();
    check_len(d.w, spec_w)?;
    check_len(d.h, spec_h)
}

/// Applies the transform to every channel fiber of `t`.
pub fn fwht_last_axis<S: Scalar>(t: &Tensor4<S>, spec: WalshSpec) -> Result<Tensor4<S>> {
    let mut out = t.clone();
    fwht_last_axis_in_place(&mut out, spec)?;
    Ok(out)
}

/// In-place channel-axis transform; batch items are processed in parallel.
pub fn fwht_last_axis_in_place<S: Scalar>(t: &mut Tensor4<S>, spec: WalshSpec) -> Result<()> {
    check_channels(t, &spec)?;
    let plan = WalshPlan::new(spec);
    let item_len = t.dims().item_len();
    if item_len == 0 {
        return Ok(());
    }
    t.data_mut().par_chunks_mut(item_len).for_each_init(
        || vec![S::zero(); plan.len()],
        |scratch, item| channels_item(item, &plan, scratch, &mut NoCount),
    );
    Ok(())
}

/// Serial channel-axis transform that reports exact operation counts.
pub fn fwht_last_axis_counted<S: Scalar>(
    t: &mut Tensor4<S>,
    spec: WalshSpec,
    counter: &mut OpCount,
) -> Result<()> {
    check_channels(t, &spec)?;
    let plan = WalshPlan::new(spec);
    let mut scratch = vec![S::zero(); plan.len()];
    let item_len = t.dims().item_len();
    if item_len == 0 {
        return Ok(());
    }
    for item in t.data_mut().chunks_exact_mut(item_len) {
        channels_item(item, &plan, &mut scratch, counter);
    }
    Ok(())
}

/// Separable 2D transform over width and height.
pub fn fwht_2d<S: Scalar>(t: &Tensor4<S>, spec_w: WalshSpec, spec_h: WalshSpec) -> Result<Tensor4<S>> {
    let mut out = t.clone();
    fwht_2d_in_place(&mut out, spec_w, spec_h)?;
    Ok(out)
}

pub fn fwht_2d_in_place<S: Scalar>(t: &mut Tensor4<S>, spec_w: WalshSpec, spec_h: WalshSpec) -> Result<()> {
    check_spatial(t, &spec_w, &spec_h)?;
    let plan = SpatialPlan::new(spec_w, spec_h);
    let d = t.dims();
    let item_len = d.item_len();
    if item_len == 0 {
        return Ok(());
    }
    t.data_mut().par_chunks_mut(item_len).for_each_init(
        || vec![S::zero(); item_len],
        |scratch, item| plan.apply(item, d.c, scratch, &mut NoCount),
    );
    Ok(())
}

/// Serial 2D transform that reports exact operation counts.
pub fn fwht_2d_counted<S: Scalar>(
    t: &mut Tensor4<S>,
    spec_w: WalshSpec,
    spec_h: WalshSpec,
    counter: &mut OpCount,
) -> Result<()> {
    check_spatial(t, &spec_w, &spec_h)?;
    let plan = SpatialPlan::new(spec_w, spec_h);
    let d = t.dims();
    let item_len = d.item_len();
    if item_len == 0 {
        return Ok(());
    }
    let mut scratch = vec![S::zero(); item_len];
    for item in t.data_mut().chunks_exact_mut(item_len) {
        plan.apply(item, d.c, &mut scratch, counter);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims4;

    fn mat(rows: &[&[i8]]) -> Vec<i8> {
        rows.iter().flat_map(|r| r.iter().copied()).collect()
    }

    #[test]
    fn hadamard_small_orders() {
        assert_eq!(hadamard_matrix(0).unwrap().entries, vec![1]);
        assert_eq!(hadamard_matrix(1).unwrap().entries, vec![1, 1, 1, -1]);
        let h2 = hadamard_matrix(2).unwrap();
        assert_eq!(
            h2.entries,
            mat(&[&[1, 1, 1, 1], &[1, -1, 1, -1], &[1, 1, -1, -1], &[1, -1, -1, 1]])
        );
    }

    #[test]
    fn walsh_order_two() {
        let w2 = walsh_matrix(2).unwrap();
        assert_eq!(
            w2.entries,
            mat(&[&[1, 1, 1, 1], &[1, 1, -1, -1], &[1, -1, -1, 1], &[1, -1, 1, -1]])
        );
        assert_eq!(walsh_matrix(0).unwrap().entries, vec![1]);
    }

    #[test]
    fn order_guard() {
        assert_eq!(
            hadamard_matrix(17).unwrap_err(),
            WhtError::OrderTooLarge { order: 17, max: 16 }
        );
        assert!(walsh_matrix(17).is_err());
    }

    #[test]
    fn kronecker_form_matches_recursion() {
        // H_k = H_1 (x) H_{k-1}
        for k in 1..=6u32 {
            let h = hadamard_matrix(k).unwrap();
            let prev = hadamard_matrix(k - 1).unwrap();
            let h1 = hadamard_matrix(1).unwrap();
            let m = prev.order();
            for i in 0..2 * m {
                for j in 0..2 * m {
                    assert_eq!(h.get(i, j), h1.get(i / m, j / m) * prev.get(i % m, j % m));
                }
            }
        }
    }

    #[test]
    fn other_composition_is_not_sequency() {
        for k in 2..=6u32 {
            let pair = PermutationPair::new(k);
            let perm = pair.compose(Composition::BitReversalThenGray);
            let w = hadamard_matrix(k).unwrap().permute_rows(&perm);
            assert!((0..w.order()).any(|j| w.sign_changes(j) != j), "k={k}");
        }
    }

    #[test]
    fn permutations_are_bijections() {
        for k in 0..=10u32 {
            let pair = PermutationPair::new(k);
            let m = 1usize << k;
            for p in [&pair.bit_reversal, &pair.gray_code] {
                let mut seen = vec![false; m];
                for &i in p.iter() {
                    assert!(!seen[i]);
                    seen[i] = true;
                }
            }
            for i in 0..m {
                assert_eq!(pair.bit_reversal[pair.bit_reversal[i]], i);
            }
        }
    }

    #[test]
    fn walsh_matrix_is_symmetric() {
        // The layer backward passes rely on W = W^T.
        for k in 0..=8u32 {
            let w = walsh_matrix(k).unwrap();
            assert_eq!(w, w.transpose(), "k={k}");
        }
    }

    #[test]
    fn fwht_1d_examples() {
        let seq = WalshSpec::new(2, Ordering::WalshSequency, Normalization::None);
        let had = WalshSpec::new(2, Ordering::Hadamard, Normalization::None);
        assert_eq!(fwht_1d(&[2.5f64; 4], seq).unwrap(), vec![10.0, 0.0, 0.0, 0.0]);
        assert_eq!(fwht_1d(&[1.0f64, -1.0, 1.0, -1.0], seq).unwrap(), vec![0.0, 0.0, 0.0, 4.0]);
        assert_eq!(fwht_1d(&[1.0f64, -1.0, 1.0, -1.0], had).unwrap(), vec![0.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn fwht_1d_length_errors() {
        let spec = WalshSpec::layer(2);
        assert_eq!(
            fwht_1d(&[1.0f64; 3], spec).unwrap_err(),
            WhtError::NotPowerOfTwo(3)
        );
        assert_eq!(
            fwht_1d(&[1.0f64; 8], spec).unwrap_err(),
            WhtError::LengthMismatch {
                expected: 4,
                actual: 8
            }
        );
    }

    #[test]
    fn last_axis_examples() {
        let spec = WalshSpec::layer(2);
        let t = Tensor4::<f64>::filled(Dims4::new(1, 1, 1, 4), 1.0);
        assert_eq!(fwht_last_axis(&t, spec).unwrap().data(), &[2.0, 0.0, 0.0, 0.0]);

        let t = Tensor4::<f64>::from_f64(Dims4::new(2, 1, 1, 4), &[1., 1., 1., 1., 1., -1., 1., -1.]).unwrap();
        let out = fwht_last_axis(&t, spec).unwrap();
        assert_eq!(out.data(), &[2., 0., 0., 0., 0., 0., 0., 2.]);

        let z = Tensor4::<f64>::zeros(Dims4::new(3, 2, 2, 8));
        assert_eq!(fwht_last_axis(&z, WalshSpec::layer(3)).unwrap(), z);

        let bad = Tensor4::<f64>::zeros(Dims4::new(1, 1, 1, 6));
        assert!(fwht_last_axis(&bad, WalshSpec::layer(2)).is_err());
    }

    #[test]
    fn two_d_constant_is_dc_only() {
        let spec = WalshSpec::new(2, Ordering::WalshSequency, Normalization::None);
        let t = Tensor4::<f64>::filled(Dims4::new(1, 4, 4, 1), 0.75);
        let out = fwht_2d(&t, spec, spec).unwrap();
        assert_eq!(out.get(0, 0, 0, 0), 12.0);
        assert_eq!(out.data().iter().filter(|&&v| v != 0.0).count(), 1);
        let bad = Tensor4::<f64>::zeros(Dims4::new(1, 3, 4, 1));
        assert!(fwht_2d(&bad, spec, spec).is_err());
    }

    #[test]
    fn counted_butterflies() {
        let spec = WalshSpec::new(5, Ordering::WalshSequency, Normalization::None);
        let mut t = Tensor4::<f64>::filled(Dims4::new(2, 3, 1, 32), 1.0);
        let mut count = OpCount::default();
        fwht_last_axis_counted(&mut t, spec, &mut count).unwrap();
        assert_eq!(count.additions, 6 * 32 * 5);
        assert_eq!(count.multiplications, 0);
        assert_eq!(count.scalings, 0);
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(0), 0);
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(960), 10);
        assert_eq!(ceil_log2(1024), 10);
        assert_eq!(ceil_log2(1025), 11);
    }
}
