//! Monte Carlo accumulation with a fixed reduction order.

use rayon::prelude::*;
use serde::Serialize;

/// A Monte Carlo estimate and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }
}

/// Running sums for a vector of per-sample values.
#[derive(Debug, Clone)]
pub struct VecMoments {
    pub n: usize,
    pub sum: Vec<f64>,
    pub sumsq: Vec<f64>,
}

impl VecMoments {
    pub fn new(dim: usize) -> Self {
        Self { n: 0, sum: vec![0.0; dim], sumsq: vec![0.0; dim] }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        for ((s, q), v) in self.sum.iter_mut().zip(self.sumsq.iter_mut()).zip(x) {
            *s += v;
            *q += v * v;
        }
    }

    pub fn merge(&mut self, o: &VecMoments) {
        self.n += o.n;
        for (a, b) in self.sum.iter_mut().zip(&o.sum) {
            *a += b;
        }
        for (a, b) in self.sumsq.iter_mut().zip(&o.sumsq) {
            *a += b;
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.n as f64
    }

    pub fn stderr(&self, i: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.sum[i] / n;
        let var = ((self.sumsq[i] - n * m * m) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }

    pub fn estimate(&self, i: usize) -> Estimate {
        Estimate { value: self.mean(i), stderr: self.stderr(i) }
    }
}

/// Samples per reduction chunk. Chunk boundaries are fixed, so per-chunk
/// random streams keep results independent of the thread count.
pub const CHUNK: usize = 256;

/// Evaluate `f(i, out)` for `i in 0..n` in parallel and accumulate the
/// per-sample vectors. Chunks are reduced in index order, so the result is
/// bitwise identical for any thread count.
pub fn accumulate<F>(n: usize, dim: usize, f: F) -> VecMoments
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    accumulate_with(n, dim, |_| (), |_, i, out| f(i, out))
}

/// Like [`accumulate`], with per-chunk state built by `init(chunk_index)`.
/// Samples inside a chunk are visited in increasing order.
pub fn accumulate_with<S, I, F>(n: usize, dim: usize, init: I, f: F) -> VecMoments
where
    I: Fn(usize) -> S + Sync,
    F: Fn(&mut S, usize, &mut [f64]) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<VecMoments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut state = init(c);
            let mut acc = VecMoments::new(dim);
            let mut buf = vec![0.0; dim];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                buf.iter_mut().for_each(|v| *v = 0.0);
                f(&mut state, i, &mut buf);
                acc.push(&buf);
            }
            acc
        })
        .collect();
    let mut total = VecMoments::new(dim);
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Numerically stable `log Σ exp(x_i)`.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_count_does_not_change_result() {
        let f = |i: usize, out: &mut [f64]| {
            out[0] = (i as f64).sin();
            out[1] = 1.0 / (1.0 + i as f64);
        };
        let a = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| accumulate(5000, 2, f));
        let b = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| accumulate(5000, 2, f));
        assert_eq!(a.sum, b.sum);
        assert_eq!(a.sumsq, b.sumsq);
    }

    #[test]
    fn lse_handles_large_values() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
