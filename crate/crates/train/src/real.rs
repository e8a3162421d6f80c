//! Scalars with a matrix-multiply kernel.

use walshnet_core::Scalar;

/// A [`Scalar`] backed by a packed GEMM kernel.
pub trait Real: Scalar {
    /// Raw strided `C = alpha A B + beta C` with `A: m x k`, `B: k x n`.
    ///
    /// # Safety
    /// The pointers and strides must describe in-bounds matrices and `c`
    /// must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major matrix operand, optionally read transposed.
#[derive(Debug, Clone, Copy)]
pub struct Operand<'a, S> {
    pub data: &'a [S],
    pub transposed: bool,
}

impl<'a, S> Operand<'a, S> {
    pub fn new(data: &'a [S]) -> Self {
        Self {
            data,
            transposed: false,
        }
    }

    pub fn t(data: &'a [S]) -> Self {
        Self {
            data,
            transposed: true,
        }
    }
}

/// `C (m x n) = A (m x k) B (k x n)`, or `C += A B` when `accumulate`.
/// A transposed operand is stored as its transpose in row-major order.
pub fn gemm<S: Real>(m: usize, k: usize, n: usize, a: Operand<S>, b: Operand<S>, c: &mut [S], accumulate: bool) {
    assert_eq!(a.data.len(), m * k, "gemm: A has wrong length");
    assert_eq!(b.data.len(), k * n, "gemm: B has wrong length");
    assert_eq!(c.len(), m * n, "gemm: C has wrong length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(S::zero());
        }
        return;
    }
    let (rsa, csa) = if a.transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b.transposed { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { S::one() } else { S::zero() };
    // SAFETY: lengths were checked above and `c` is a distinct mutable slice.
    unsafe {
        S::gemm_raw(
            m,
            k,
            n,
            S::one(),
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}
