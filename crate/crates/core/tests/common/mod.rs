//! Dense reference implementations shared by the integration tests.
//!
//! Everything here is built from first principles: Sylvester products for
//! the natural-order matrix, and a sort by sign-change count for sequency
//! order. No fast-path code from the crate is used.

#![allow(dead_code)]

use rand::Rng;

pub type Mat = Vec<Vec<f64>>;

/// Natural-order Hadamard matrix by repeated Kronecker product with `[[1,1],[1,-1]]`.
pub fn sylvester(order: u32) -> Mat {
    let mut h = vec![vec![1.0]];
    for _ in 0..order {
        let m = h.len();
        let mut next = vec![vec![0.0; 2 * m]; 2 * m];
        for i in 0..m {
            for j in 0..m {
                let v = h[i][j];
                next[i][j] = v;
                next[i][j + m] = v;
                next[i + m][j] = v;
                next[i + m][j + m] = -v;
            }
        }
        h = next;
    }
    h
}

pub fn sign_changes(row: &[f64]) -> usize {
    row.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Sequency-ordered matrix: Sylvester rows sorted by their number of sign changes.
pub fn sequency(order: u32) -> Mat {
    let mut rows = sylvester(order);
    rows.sort_by_key(|r| sign_changes(r));
    rows
}

pub fn matvec(m: &Mat, x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Orthonormal sequency transform `W x / sqrt(m)`.
pub fn ortho(x: &[f64]) -> Vec<f64> {
    let order = x.len().trailing_zeros();
    let s = 1.0 / (x.len() as f64).sqrt();
    matvec(&sequency(order), x).into_iter().map(|v| v * s).collect()
}

pub fn smooth(x: f64, t: f64) -> f64 {
    x.tanh() * (x.abs() - t).max(0.0)
}

pub fn weighted(x: f64, t: f64, v: f64) -> f64 {
    x.tanh() * ((v * x).abs() - t).max(0.0)
}

/// Smooth thresholding with the first coefficient passed through.
pub fn threshold_off_dc(y: &[f64], t: &[f64]) -> Vec<f64> {
    y.iter()
        .enumerate()
        .map(|(i, &v)| if i == 0 { v } else { smooth(v, t[i]) })
        .collect()
}

pub fn pad(x: &[f64], len: usize) -> Vec<f64> {
    let mut v = x.to_vec();
    v.resize(len, 0.0);
    v
}

pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Channel expansion on one fiber: pad, transform, threshold off DC,
/// transform, truncate.
pub fn expand_fiber(x: &[f64], out: usize, t: &[f64]) -> Vec<f64> {
    let l = next_pow2(out);
    let y = ortho(&pad(x, l));
    let z = ortho(&threshold_off_dc(&y, t));
    z[..out].to_vec()
}

/// Channel projection on one fiber with pooled AC coefficients.
pub fn project_fiber(x: &[f64], out: usize, t: &[f64]) -> Vec<f64> {
    let p = next_pow2(x.len());
    let q = next_pow2(out);
    let r = p / q;
    let y = ortho(&pad(x, p));
    let s = threshold_off_dc(&y, t);
    let mut pooled = vec![y[0] / r as f64];
    for j in 0..q - 1 {
        let window = &s[1 + j * r..1 + (j + 1) * r];
        pooled.push(window.iter().sum::<f64>() / r as f64);
    }
    ortho(&pooled)[..out].to_vec()
}

/// Block starts by floored float linspace, the way array libraries evaluate it.
pub fn linspace_starts(c: usize, s: usize, count: usize) -> Vec<usize> {
    if count == 1 {
        return vec![0];
    }
    let span = (c - s) as f64;
    (0..count)
        .map(|i| if i == count - 1 { c - s } else { (i as f64 * span / (count - 1) as f64).floor() as usize })
        .collect()
}

/// Block expansion on one fiber.
pub fn block_expand_fiber(x: &[f64], s: usize, out: usize, t: &[f64]) -> Vec<f64> {
    let count = out / s;
    let mut z = Vec::with_capacity(out);
    for k in linspace_starts(x.len(), s, count) {
        let y = ortho(&x[k..k + s]);
        z.extend(ortho(&threshold_off_dc(&y, t)));
    }
    z
}

/// Block projection on one fiber with feature-domain pooling.
pub fn block_project_fiber(x: &[f64], s: usize, window: usize, t: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(x.len());
    for blk in x.chunks(s) {
        let y = ortho(blk);
        z.extend(ortho(&threshold_off_dc(&y, t)));
    }
    z.chunks(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
}

/// Dense 2D layer on one `w x h` channel slice: `W_w X W_h^T`, threshold
/// every coefficient except (0, 0), invert, crop, optional residual add.
pub fn layer2d_slice(
    x: &[Vec<f64>],
    t: &[f64],
    v: Option<&[f64]>,
    residual: bool,
) -> Vec<Vec<f64>> {
    let (w, h) = (x.len(), x[0].len());
    let (pw, ph) = (next_pow2(w), next_pow2(h));
    let (ww, wh) = (sequency(pw.trailing_zeros()), sequency(ph.trailing_zeros()));
    let scale = 1.0 / ((pw * ph) as f64).sqrt();
    let sandwich = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; ph]; pw];
        for i in 0..pw {
            for j in 0..ph {
                let mut acc = 0.0;
                for a in 0..pw {
                    for b in 0..ph {
                        acc += ww[i][a] * m[a][b] * wh[j][b];
                    }
                }
                out[i][j] = acc * scale;
            }
        }
        out
    };
    let mut padded = vec![vec![0.0; ph]; pw];
    for i in 0..w {
        padded[i][..h].copy_from_slice(&x[i]);
    }
    let y = sandwich(&padded);
    let mut s = y.clone();
    for i in 0..pw {
        for j in 0..ph {
            if i == 0 && j == 0 {
                continue;
            }
            let idx = i * ph + j;
            s[i][j] = match v {
                Some(v) => weighted(y[i][j], t[idx], v[idx]),
                None => smooth(y[i][j], t[idx]),
            };
        }
    }
    let z = sandwich(&s);
    (0..w)
        .map(|i| (0..h).map(|j| z[i][j] + if residual { x[i][j] } else { 0.0 }).collect())
        .collect()
}
