//! Raw slice kernels shared by the tensor methods and the graph ops.
//!
//! All matrices are row-major. Each output element is accumulated in a fixed
//! order so that results do not depend on which caller computed them.

use crate::math;

/// `out += a[m×k] · b[k×n]`
pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out += a[m×k] · b[n×k]ᵀ`
pub fn matmul_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] += dot(a_row, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `out += a[m×k]ᵀ · b[m×n]`, an `[k×n]` result.
pub fn matmul_tn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for p in 0..m {
        let a_row = &a[p * k..(p + 1) * k];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &av) in a_row.iter().enumerate() {
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

#[inline(always)]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for &x in row.iter() {
        z += math::exp(x - max);
    }
    let lz = max + math::ln(z);
    for x in row.iter_mut() {
        *x -= lz;
    }
}

/// Row softmax. The maximum and the normalizer are four-lane reductions
/// and the exponentials a separate pass, so each loop vectorizes.
pub fn softmax_in_place(row: &mut [f64]) {
    softmax_row(row);
}

#[inline(always)]
fn softmax_row(row: &mut [f64]) {
    let mut mx = [f64::NEG_INFINITY; 4];
    let mut chunks = row.chunks_exact(4);
    for c in &mut chunks {
        for l in 0..4 {
            mx[l] = if c[l] > mx[l] { c[l] } else { mx[l] };
        }
    }
    let mut max = mx[0].max(mx[1]).max(mx[2].max(mx[3]));
    for &x in chunks.remainder() {
        max = max.max(x);
    }
    for x in row.iter_mut() {
        *x = exp_nonpositive(*x - max);
    }
    let mut acc = [0.0f64; 4];
    let mut chunks = row.chunks_exact(4);
    for c in &mut chunks {
        for l in 0..4 {
            acc[l] += c[l];
        }
    }
    let mut z = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for &x in chunks.remainder() {
        z += x;
    }
    let inv = 1.0 / z;
    for x in row.iter_mut() {
        *x *= inv;
    }
}

/// `e^x` for `x <= 0` without branches, within a few ulp of `libm::exp`.
/// Results that would be subnormal (`x < -708`) are flushed to zero.
///
/// `x = k·ln2 + r` with `|r| <= ln2/2`; `e^r` is a degree-13 Taylor
/// polynomial and `2^k` is assembled from bits.
#[inline(always)]
pub fn exp_nonpositive(x: f64) -> f64 {
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // Adding 1.5·2^52 rounds to an integer held in the low mantissa bits.
    const SHIFT: f64 = 6_755_399_441_055_744.0;
    const FLOOR: f64 = -708.0;
    let xc = if x < FLOOR { FLOOR } else { x };
    let kf = xc * core::f64::consts::LOG2_E + SHIFT;
    let k = kf - SHIFT;
    let r = (xc - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 6_227_020_800.0;
    p = p * r + 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    // The low 12 mantissa bits of `kf` are `k mod 4096`.
    let y = p * f64::from_bits(kf.to_bits().wrapping_add(1023) << 52);
    if x < FLOOR {
        0.0
    } else {
        y
    }
}

/// Multi-head scaled dot-product attention of `q [m×d]` over the rows
/// `rows` of `k, v [_×d]`, written into `out [m×d]`.
///
/// Per head this performs exactly the operations of `q_h·k_hᵀ`, scaling,
/// a row softmax and `a·v_h` with the kernels above, so the result is
/// bit-identical to composing them. `weights [m×rows.len()]`, when given,
/// receives the head-averaged attention.
pub fn attention(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    m: usize,
    d: usize,
    rows: &[usize],
    heads: usize,
    out: &mut [f64],
    weights: Option<&mut [f64]>,
) {
    debug_assert_eq!(q.len(), m * d);
    debug_assert_eq!(out.len(), m * d);
    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: AVX2 support was just detected.
        return unsafe { attention_avx2(q, k, v, m, d, rows, heads, out, weights) };
    }
    attention_any(q, k, v, m, d, rows, heads, out, weights)
}

/// The same code compiled with 256-bit vectors. Only lane width changes
/// (no fused multiply-add), so results are bit-identical.
#[cfg(all(feature = "std", target_arch = "x86_64"))]
#[target_feature(enable = "avx2")]
unsafe fn attention_avx2(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    m: usize,
    d: usize,
    rows: &[usize],
    heads: usize,
    out: &mut [f64],
    weights: Option<&mut [f64]>,
) {
    attention_any(q, k, v, m, d, rows, heads, out, weights)
}

#[inline(always)]
fn attention_any(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    m: usize,
    d: usize,
    rows: &[usize],
    heads: usize,
    out: &mut [f64],
    weights: Option<&mut [f64]>,
) {
    // Common head widths get a specialized copy with fixed-length loops.
    match d / heads {
        2 => attention_dh::<2>(q, k, v, m, d, rows, heads, out, weights),
        3 => attention_dh::<3>(q, k, v, m, d, rows, heads, out, weights),
        4 => attention_dh::<4>(q, k, v, m, d, rows, heads, out, weights),
        8 => attention_dh::<8>(q, k, v, m, d, rows, heads, out, weights),
        12 => attention_dh::<12>(q, k, v, m, d, rows, heads, out, weights),
        16 => attention_dh::<16>(q, k, v, m, d, rows, heads, out, weights),
        _ => attention_dh::<0>(q, k, v, m, d, rows, heads, out, weights),
    }
}

/// `DH` is the head width, or 0 to read it from `d / heads`.
#[inline(always)]
fn attention_dh<const DH: usize>(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    m: usize,
    d: usize,
    rows: &[usize],
    heads: usize,
    out: &mut [f64],
    mut weights: Option<&mut [f64]>,
) {
    let n = rows.len();
    let dh = if DH == 0 { d / heads } else { DH };
    let scale = 1.0 / math::sqrt(dh as f64);
    // Keys regrouped four entries at a time: `kb[(b·d + x)·4 + l]` is
    // component `x` of entry `4b + l`, zero past the last entry.
    const B: usize = 4;
    let mut kb = alloc::vec![0.0; n.div_ceil(B) * d * B];
    for (j, &r) in rows.iter().enumerate() {
        let (b, l) = (j / B, j % B);
        for (x, &kv) in k[r * d..(r + 1) * d].iter().enumerate() {
            kb[(b * d + x) * B + l] = kv;
        }
    }
    let chunks = dh / 4;
    // Head-major scores: `a[h·n + j]`.
    let mut a = alloc::vec![0.0; heads * n];
    for i in 0..m {
        let qi = &q[i * d..(i + 1) * d];
        for (b, blk) in kb.chunks_exact(d * B).enumerate() {
            let live = B.min(n - b * B);
            for (h, qh) in qi.chunks_exact(dh).enumerate() {
                let kh = &blk[h * dh * B..(h + 1) * dh * B];
                // The lane accumulators of `dot`, for four entries at once.
                let mut acc = [[0.0f64; B]; 4];
                for c in 0..chunks {
                    for (l, al) in acc.iter_mut().enumerate() {
                        let x = c * 4 + l;
                        for (s, &kv) in al.iter_mut().zip(&kh[x * B..(x + 1) * B]) {
                            *s += qh[x] * kv;
                        }
                    }
                }
                let mut t = [0.0f64; B];
                for (e, s) in t.iter_mut().enumerate() {
                    *s = (acc[0][e] + acc[1][e]) + (acc[2][e] + acc[3][e]);
                }
                for x in chunks * 4..dh {
                    for (s, &kv) in t.iter_mut().zip(&kh[x * B..(x + 1) * B]) {
                        *s += qh[x] * kv;
                    }
                }
                for (e, &s) in t[..live].iter().enumerate() {
                    a[h * n + b * B + e] = scale * (0.0 + s);
                }
            }
        }
        for row in a.chunks_mut(n) {
            softmax_row(row);
        }
        let o = &mut out[i * d..(i + 1) * d];
        for (h, oh) in o.chunks_exact_mut(dh).enumerate() {
            let ah = &a[h * n..(h + 1) * n];
            let lo = h * dh;
            if DH > 0 {
                let mut acc = [0.0f64; 16];
                for (&av, &r) in ah.iter().zip(rows) {
                    let vh = &v[r * d + lo..r * d + lo + DH];
                    for c in 0..DH {
                        acc[c] += av * vh[c];
                    }
                }
                oh.copy_from_slice(&acc[..DH]);
            } else {
                oh.iter_mut().for_each(|x| *x = 0.0);
                for (&av, &r) in ah.iter().zip(rows) {
                    for (x, &bv) in oh.iter_mut().zip(&v[r * d + lo..r * d + lo + dh]) {
                        *x += av * bv;
                    }
                }
            }
        }
        if let Some(w) = weights.as_deref_mut() {
            let w = &mut w[i * n..(i + 1) * n];
            w.copy_from_slice(&a[..n]);
            for h in 1..heads {
                w.iter_mut().zip(&a[h * n..(h + 1) * n]).for_each(|(x, y)| *x += y);
            }
        }
    }
    if let Some(w) = weights {
        let inv = 1.0 / heads as f64;
        w.iter_mut().for_each(|x| *x *= inv);
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}
