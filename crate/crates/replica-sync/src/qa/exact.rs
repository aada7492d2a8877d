use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::kernel::KernelSpec;
use crate::error::{invalid, Error, Result};
use crate::finite::pair_index;
use crate::rng::{derive, tag};

/// Largest `n` enumerated over all `n!` permutations.
pub const QA_MAX_N: usize = 9;

/// One draw of the assignment model `y_ij = κ(x_{π*(i)}, x_{π*(j)}) + √n z_ij`.
#[derive(Debug, Clone)]
pub struct QaInstance {
    pub n: usize,
    pub kernel: KernelSpec,
    pub x: Vec<f64>,
    pub pi_star: Vec<usize>,
    /// Upper-triangle observations in pair order.
    pub y: Vec<f64>,
    pub seed: u64,
}

pub fn generate_qa(n: usize, kernel: &KernelSpec, seed: u64) -> Result<QaInstance> {
    kernel.validate()?;
    if n < 2 {
        return Err(invalid("assignment instances need n >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, tag::SIGNAL));
    let x: Vec<f64> = (0..n).map(|_| kernel.base.sample(&mut rng)).collect();
    let mut pi_star: Vec<usize> = (0..n).collect();
    pi_star.shuffle(&mut rng);
    let mut noise = ChaCha8Rng::seed_from_u64(derive(seed, tag::NOISE));
    let z: Vec<f64> = (0..n * (n - 1) / 2).map(|_| noise.sample(StandardNormal)).collect();
    QaInstance::from_parts(kernel.clone(), x, pi_star, &z, seed)
}

impl QaInstance {
    pub fn from_parts(kernel: KernelSpec, x: Vec<f64>, pi_star: Vec<usize>, z: &[f64], seed: u64) -> Result<Self> {
        let n = x.len();
        let mut seen = vec![false; n];
        if pi_star.len() != n || pi_star.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid("pi_star must be a permutation of 0..n"));
        }
        if z.len() != n * (n.max(1) - 1) / 2 {
            return Err(invalid("noise length must be n(n-1)/2"));
        }
        let sn = (n as f64).sqrt();
        let mut y = vec![0.0; z.len()];
        for j in 1..n {
            for i in 0..j {
                let p = pair_index(i, j);
                y[p] = kernel.eval(x[pi_star[i]], x[pi_star[j]]) + sn * z[p];
            }
        }
        Ok(Self { n, kernel, x, pi_star, y, seed })
    }

    /// Noise recovered from the observations.
    pub fn noise(&self) -> Vec<f64> {
        let sn = (self.n as f64).sqrt();
        let mut z = vec![0.0; self.y.len()];
        for j in 1..self.n {
            for i in 0..j {
                let p = pair_index(i, j);
                z[p] = (self.y[p] - self.kernel.eval(self.x[self.pi_star[i]], self.x[self.pi_star[j]])) / sn;
            }
        }
        z
    }

    /// Same observations with labels `x'_a = x_{σ(a)}` and `π*' = σ⁻¹∘π*`.
    pub fn relabel(&self, sigma: &[usize]) -> Result<Self> {
        let n = self.n;
        let mut inv = vec![usize::MAX; n];
        for (a, &s) in sigma.iter().enumerate() {
            if s >= n || inv[s] != usize::MAX {
                return Err(invalid("sigma must be a permutation"));
            }
            inv[s] = a;
        }
        if sigma.len() != n {
            return Err(invalid("sigma must be a permutation"));
        }
        Ok(Self {
            n,
            kernel: self.kernel.clone(),
            x: sigma.iter().map(|&s| self.x[s]).collect(),
            pi_star: self.pi_star.iter().map(|&p| inv[p]).collect(),
            y: self.y.clone(),
            seed: self.seed,
        })
    }

    /// `H(π) = Σ_{i<j} κ_π(ij) y_ij / n − κ_π(ij)² / (2n)`.
    pub fn hamiltonian(&self, pi: &[usize], gram: &[f64]) -> f64 {
        let n = self.n;
        let mut h = 0.0;
        for j in 1..n {
            for i in 0..j {
                let k = gram[pi[i] * n + pi[j]];
                h += k * self.y[pair_index(i, j)] - 0.5 * k * k;
            }
        }
        h / n as f64
    }

    pub fn gram(&self) -> Vec<f64> {
        let n = self.n;
        (0..n * n).map(|t| self.kernel.eval(self.x[t / n], self.x[t % n])).collect()
    }
}

/// Exact posterior averages over all permutations.
#[derive(Debug, Clone, Serialize)]
pub struct QaExactReport {
    pub free_energy: f64,
    pub mean_hamiltonian: f64,
    /// `mean_{i<j} ⟨κ_π(ij)⟩²`, the two-replica overlap.
    pub overlap_replicas: f64,
    /// `mean_{i<j} κ_{π*}(ij) ⟨κ_π(ij)⟩`, the overlap with the truth.
    pub overlap_truth: f64,
    /// `overlap_replicas − overlap_truth`; zero on average over disorder.
    pub nishimori_gap: f64,
    /// `mean_{i<j} (κ_{π*}(ij) − ⟨κ_π(ij)⟩)²`.
    pub matrix_mmse: f64,
}

/// `(1/n) log((1/n!) Σ_π exp H(π))` by enumeration (Heap's algorithm).
pub fn qa_exact_free_energy(instance: &QaInstance) -> Result<QaExactReport> {
    let n = instance.n;
    if n > QA_MAX_N {
        return Err(Error::BudgetExceeded { size: (1..=n).map(|v| v as f64).product(), limit: (1..=QA_MAX_N).map(|v| v as f64).product() });
    }
    let pairs = n * (n - 1) / 2;
    if pairs == 0 {
        return Ok(QaExactReport {
            free_energy: 0.0,
            mean_hamiltonian: 0.0,
            overlap_replicas: 0.0,
            overlap_truth: 0.0,
            nishimori_gap: 0.0,
            matrix_mmse: 0.0,
        });
    }
    let gram = instance.gram();
    let mut pi: Vec<usize> = (0..n).collect();
    let mut hs: Vec<f64> = Vec::new();
    let mut perms: Vec<Vec<usize>> = Vec::new();
    let mut c = vec![0usize; n];
    let mut push = |pi: &[usize]| {
        hs.push(instance.hamiltonian(pi, &gram));
        perms.push(pi.to_vec());
    };
    push(&pi);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                pi.swap(0, i);
            } else {
                pi.swap(c[i], i);
            }
            push(&pi);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    let mx = hs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = hs.iter().map(|h| (h - mx).exp()).collect();
    let z: f64 = weights.iter().sum();
    let count = hs.len() as f64;
    let free_energy = (mx + (z / count).ln()) / n as f64;
    let mean_hamiltonian = hs.iter().zip(&weights).map(|(h, w)| h * w).sum::<f64>() / z / n as f64;
    let mut mean = vec![0.0; pairs];
    for (p, w) in perms.iter().zip(&weights) {
        for j in 1..n {
            for i in 0..j {
                mean[pair_index(i, j)] += w * gram[p[i] * n + p[j]];
            }
        }
    }
    mean.iter_mut().for_each(|v| *v /= z);
    let (mut rep, mut tru, mut mse) = (0.0, 0.0, 0.0);
    let ps = &instance.pi_star;
    for j in 1..n {
        for i in 0..j {
            let m = mean[pair_index(i, j)];
            let s = gram[ps[i] * n + ps[j]];
            rep += m * m;
            tru += s * m;
            mse += (s - m).powi(2);
        }
    }
    let np = pairs as f64;
    Ok(QaExactReport {
        free_energy,
        mean_hamiltonian,
        overlap_replicas: rep / np,
        overlap_truth: tru / np,
        nishimori_gap: (rep - tru) / np,
        matrix_mmse: mse / np,
    })
}
