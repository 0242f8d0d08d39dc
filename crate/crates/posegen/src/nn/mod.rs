//! Minimal CPU neural-network substrate: conv/deconv via im2col + GEMM,
//! instance normalization, activations, residual blocks, and Adam.
//!
//! Everything is hand-differentiated. Reductions accumulate in f64 and
//! batch-parallel work is split into a fixed number of chunks, so results
//! are bit-identical from run to run on one machine regardless of the
//! rayon pool size.

pub mod conv;
pub mod layers;
pub mod optim;

pub use conv::{Conv2d, Deconv2d};
pub use layers::{GradStore, InstanceNorm, Layer, ResBlock, SeqCache, Sequential};
pub use optim::Adam;

/// Fixed chunk count for batch-parallel reductions. Chunked accumulation in
/// chunk order keeps gradient sums bit-deterministic for any thread count.
pub(crate) const PAR_CHUNKS: usize = 4;

pub(crate) fn sample_chunks(n: usize) -> Vec<std::ops::Range<usize>> {
    let chunks = PAR_CHUNKS.min(n.max(1));
    let base = n / chunks;
    let rem = n % chunks;
    let mut out = Vec::with_capacity(chunks);
    let mut start = 0;
    for i in 0..chunks {
        let len = base + usize::from(i < rem);
        out.push(start..start + len);
        start += len;
    }
    out
}

/// Row-major GEMM: `c[m,n] = alpha * a@b + beta * c`, with optional
/// transposition of either input.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    a_trans: bool,
    b: &[f32],
    b_trans: bool,
    beta: f32,
    c: &mut [f32],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Gaussian-initialized parameter blob (the DCGAN-lineage std 0.02 default).
pub(crate) fn gaussian_init(len: usize, std: f32, rng: &mut crate::rng::Rng) -> Vec<f32> {
    (0..len).map(|_| (rng.normal() as f32) * std).collect()
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive() {
        let m = 3;
        let k = 4;
        let n = 2;
        let a: Vec<f32> = (0..m * k).map(|x| x as f32 * 0.5 - 2.0).collect();
        let b: Vec<f32> = (0..k * n).map(|x| x as f32 * 0.25 + 1.0).collect();
        let mut c = vec![0.0f32; m * n];
        gemm(m, k, n, 1.0, &a, false, &b, false, 0.0, &mut c);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0f32;
                for l in 0..k {
                    acc += a[i * k + l] * b[l * n + j];
                }
                assert!((c[i * n + j] - acc).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn gemm_transposed_inputs() {
        // a stored as [k, m], used transposed.
        let m = 2;
        let k = 3;
        let n = 2;
        let a_t: Vec<f32> = (0..k * m).map(|x| x as f32).collect(); // [k, m]
        let b: Vec<f32> = (0..k * n).map(|x| (x as f32) - 1.0).collect();
        let mut c = vec![0.0f32; m * n];
        gemm(m, k, n, 1.0, &a_t, true, &b, false, 0.0, &mut c);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0f32;
                for l in 0..k {
                    acc += a_t[l * m + i] * b[l * n + j];
                }
                assert!((c[i * n + j] - acc).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn sample_chunks_cover_range() {
        for n in [1usize, 2, 3, 7, 8, 16] {
            let chunks = sample_chunks(n);
            let mut covered = vec![false; n];
            for r in chunks {
                for i in r {
                    assert!(!covered[i]);
                    covered[i] = true;
                }
            }
            assert!(covered.iter().all(|&c| c));
        }
    }
}
