//! Chunked im2col + sgemm engine shared by every convolution.
//!
//! Output columns are split into fixed-size chunks that depend only on the
//! layer shape, so results are independent of thread count and of which
//! convolution front end (fixed or pitch-dependent dilation) built the taps.

use rayon::prelude::*;

/// Target size of one im2col buffer in floats.
const COL_BUDGET: usize = 1 << 16;
const MIN_CHUNK: usize = 128;
const MAX_CHUNK: usize = 8192;

pub(crate) fn chunk_len(rows: usize, out_len: usize) -> usize {
    let n = (COL_BUDGET / rows.max(1)).clamp(MIN_CHUNK, MAX_CHUNK);
    n.min(out_len.max(1))
}

/// Raw output pointer shared between workers that write disjoint columns.
#[derive(Clone, Copy)]
struct SharedOut(*mut f32);
unsafe impl Send for SharedOut {}
unsafe impl Sync for SharedOut {}

/// `c[m, n] += a[m, k] * b[k, n]` with arbitrary strides.
///
/// # Safety
/// The pointers must address matrices of the stated extent and strides,
/// and `c` must not alias `a` or `b`.
#[allow(clippy::too_many_arguments)]
pub(crate) unsafe fn sgemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: *const f32,
    rsa: isize,
    csa: isize,
    b: *const f32,
    rsb: isize,
    csb: isize,
    c: *mut f32,
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, 1.0, c, rsc, csc);
}

/// Generic gathered convolution.
///
/// `input` is `[in_channels, in_len]`; `weight` is `[out_channels, in_channels, kernel]`
/// row-major. `tap(t, k)` returns the input time index feeding output `t`
/// through kernel tap `k`, or `None` for a zero-padded position. Returns
/// `[out_channels, out_len]` including `bias`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gathered_conv<F>(
    input: &[f32],
    in_channels: usize,
    in_len: usize,
    weight: &[f32],
    bias: &[f32],
    out_channels: usize,
    kernel: usize,
    out_len: usize,
    tap: F,
) -> Vec<f32>
where
    F: Fn(usize, usize) -> Option<usize> + Sync,
{
    debug_assert_eq!(input.len(), in_channels * in_len);
    debug_assert_eq!(weight.len(), out_channels * in_channels * kernel);
    debug_assert_eq!(bias.len(), out_channels);

    let mut out = vec![0.0f32; out_channels * out_len];
    for (o, row) in out.chunks_exact_mut(out_len.max(1)).enumerate().take(out_channels) {
        row.fill(bias[o]);
    }
    if out_len == 0 {
        return out;
    }

    let rows = in_channels * kernel;
    let chunk = chunk_len(rows, out_len);
    let n_chunks = out_len.div_ceil(chunk);
    let shared = SharedOut(out.as_mut_ptr());

    let work = |ci: usize| {
        let shared = shared;
        let t0 = ci * chunk;
        let n = chunk.min(out_len - t0);
        // rows ordered (channel, tap) to match the weight layout
        let mut col = vec![0.0f32; rows * n];
        let mut idx = vec![None; n];
        for k in 0..kernel {
            for (j, slot) in idx.iter_mut().enumerate() {
                *slot = tap(t0 + j, k).filter(|&s| s < in_len);
            }
            for c in 0..in_channels {
                let src = &input[c * in_len..(c + 1) * in_len];
                let dst = &mut col[(c * kernel + k) * n..(c * kernel + k + 1) * n];
                for (d, s) in dst.iter_mut().zip(&idx) {
                    if let Some(s) = *s {
                        *d = src[s];
                    }
                }
            }
        }
        // SAFETY: chunk `ci` owns columns t0..t0+n of every output row.
        unsafe {
            sgemm_acc(
                out_channels,
                rows,
                n,
                weight.as_ptr(),
                rows as isize,
                1,
                col.as_ptr(),
                n as isize,
                1,
                shared.0.add(t0),
                out_len as isize,
                1,
            );
        }
    };

    if n_chunks > 1 && rayon::current_num_threads() > 1 {
        (0..n_chunks).into_par_iter().for_each(work);
    } else {
        (0..n_chunks).for_each(work);
    }
    out
}

/// `a[m, k] * b[k, n]` into a fresh row-major `[m, n]` buffer.
///
/// `b` is row-major; `a` may use arbitrary strides. Columns are processed in
/// shape-determined chunks, optionally in parallel.
pub(crate) fn matmul_strided_a(
    a: &[f32],
    rsa: usize,
    csa: usize,
    m: usize,
    k: usize,
    b: &[f32],
    n: usize,
) -> Vec<f32> {
    debug_assert_eq!(b.len(), k * n);
    debug_assert!(m == 0 || k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    let mut c = vec![0.0f32; m * n];
    if n == 0 {
        return c;
    }
    let chunk = chunk_len(k, n);
    let n_chunks = n.div_ceil(chunk);
    let shared = SharedOut(c.as_mut_ptr());
    let work = |ci: usize| {
        let shared = shared;
        let j0 = ci * chunk;
        let w = chunk.min(n - j0);
        // SAFETY: chunk `ci` owns columns j0..j0+w of every row of `c`.
        unsafe {
            sgemm_acc(
                m,
                k,
                w,
                a.as_ptr(),
                rsa as isize,
                csa as isize,
                b.as_ptr().add(j0),
                n as isize,
                1,
                shared.0.add(j0),
                n as isize,
                1,
            );
        }
    };
    if n_chunks > 1 && rayon::current_num_threads() > 1 {
        (0..n_chunks).into_par_iter().for_each(work);
    } else {
        (0..n_chunks).for_each(work);
    }
    c
}
