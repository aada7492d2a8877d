use serde::Serialize;

use super::{pair_index, SyncInstance};
use crate::error::{Error, Result};
use crate::group::enumerate;

/// Largest number of configurations `|G|^N` that will be enumerated.
pub const EXACT_BUDGET: f64 = 1e7;

/// Let the running log-sum-exp offset lag this far behind the maximum.
const RESCALE_MARGIN: f64 = 30.0;

/// Pair moments cost `|G|^N · C(N,2) · width`; enabled automatically up to this.
const PAIR_WORK: f64 = 2e7;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExactOptions {
    /// Accumulate `⟨φ(g_i)φ(g_j)ᵀ⟩` for all pairs (MMSE and second-moment
    /// Nishimori checks). `None` enables it when cheap.
    pub pair_moments: Option<bool>,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self { pair_moments: None }
    }
}

/// Exact posterior averages of a small finite-group instance.
#[derive(Debug, Clone, Serialize)]
pub struct ExactReport {
    /// `(1/N) log((1/|G|^N) Σ_G exp H(G; Y))`.
    pub free_energy: f64,
    /// `⟨H⟩ / N`.
    pub mean_hamiltonian: f64,
    /// Per channel `‖⟨Q(G,G′)⟩ − ⟨Q(G,G*)⟩‖_F` with `Q(G,G′) = (1/N)Σ φ(g_i)ᵀφ(g′_i)`.
    pub nishimori_gap: Vec<f64>,
    /// Per channel `⟨‖Q(G,G′)‖²⟩` over two independent posterior copies.
    pub overlap_sq_replicas: Option<Vec<f64>>,
    /// Per channel `⟨‖Q(G,G*)‖²⟩`.
    pub overlap_sq_truth: Option<Vec<f64>>,
    /// Per channel Bayes MMSE of `φ(g_i)φ(g_j)ᵀ` averaged over pairs.
    pub matrix_mmse: Option<Vec<f64>>,
    pub configurations: f64,
}

pub fn exact_free_energy(instance: &SyncInstance) -> Result<ExactReport> {
    exact_free_energy_with(instance, &ExactOptions::default())
}

/// Enumerate every configuration in Gray-code order, updating local fields
/// one site at a time.
pub fn exact_free_energy_with(instance: &SyncInstance, opts: &ExactOptions) -> Result<ExactReport> {
    let group = instance.layout.group();
    let elements = enumerate(&group)?;
    let order = elements.len();
    let n = instance.n;
    let size = (order as f64).powi(n as i32);
    if size > EXACT_BUDGET {
        return Err(Error::BudgetExceeded { size, limit: EXACT_BUDGET });
    }
    let w = instance.layout.width;
    let nl = instance.layout.len();
    let table = instance.features_of(&elements);
    let feat = |a: usize| &table[a * w..(a + 1) * w];
    let n_pairs = instance.pairs();
    let pairs_on = opts.pair_moments.unwrap_or(size * (n_pairs * w) as f64 <= PAIR_WORK);

    if n == 1 {
        return Ok(ExactReport {
            free_energy: 0.0,
            mean_hamiltonian: 0.0,
            nishimori_gap: vec![0.0; nl],
            overlap_sq_replicas: None,
            overlap_sq_truth: None,
            matrix_mmse: None,
            configurations: size,
        });
    }

    let nw = n * w;
    let coupling = instance.dense_couplings();

    let mut digits = vec![0usize; n];
    let mut dirs = vec![1isize; n];
    let mut feats: Vec<f64> = (0..n).flat_map(|_| feat(0).iter().copied()).collect();
    let mut fields = vec![0.0; nw];
    for i in 0..n {
        instance.local_field(i, &feats, &mut fields[i * w..(i + 1) * w]);
    }
    let mut h = instance.hamiltonian(&feats);

    // Accumulators relative to exp(offset).
    let mut offset = h;
    let mut z = 0.0;
    let mut sum_h = 0.0;
    let mut marg = vec![0.0; nw];
    let mut pair_acc = if pairs_on { vec![0.0; n_pairs * w] } else { Vec::new() };
    let mut delta = vec![0.0; w];

    let visit = |h: f64, feats: &[f64], offset: &mut f64, z: &mut f64, sum_h: &mut f64, marg: &mut [f64], pairs: &mut [f64]| {
        if h > *offset + RESCALE_MARGIN {
            let f = (*offset - h).exp();
            *z *= f;
            *sum_h *= f;
            marg.iter_mut().for_each(|v| *v *= f);
            pairs.iter_mut().for_each(|v| *v *= f);
            *offset = h;
        }
        let p = (h - *offset).exp();
        *z += p;
        *sum_h += p * h;
        for (a, b) in marg.iter_mut().zip(feats) {
            *a += p * b;
        }
        if !pairs.is_empty() {
            for j in 1..n {
                for i in 0..j {
                    let base = pair_index(i, j) * w;
                    let (fi, fj) = (&feats[i * w..(i + 1) * w], &feats[j * w..(j + 1) * w]);
                    for (l, &k) in instance.layout.dims.iter().enumerate() {
                        let o = instance.layout.offsets[l];
                        for col in 0..k {
                            for row in 0..k {
                                let mut acc = 0.0;
                                for m in 0..k {
                                    acc += fi[o + row + m * k] * fj[o + col + m * k];
                                }
                                pairs[base + o + row + col * k] += p * acc;
                            }
                        }
                    }
                }
            }
        }
    };

    visit(h, &feats, &mut offset, &mut z, &mut sum_h, &mut marg, &mut pair_acc);
    loop {
        // Reflected mixed-radix Gray code: exactly one site moves per step.
        let Some(i) = (0..n).find(|&i| {
            let next = digits[i] as isize + dirs[i];
            next >= 0 && next < order as isize
        }) else {
            break;
        };
        for d in &mut dirs[..i] {
            *d = -*d;
        }
        let old = digits[i];
        let new = (old as isize + dirs[i]) as usize;
        digits[i] = new;
        for t in 0..w {
            delta[t] = feat(new)[t] - feat(old)[t];
        }
        h += delta.iter().zip(&fields[i * w..(i + 1) * w]).map(|(a, b)| a * b).sum::<f64>();
        feats[i * w..(i + 1) * w].copy_from_slice(feat(new));
        for (b, &d) in delta.iter().enumerate() {
            if d != 0.0 {
                let row = &coupling[(i * w + b) * nw..(i * w + b + 1) * nw];
                for (f, c) in fields.iter_mut().zip(row) {
                    *f += d * c;
                }
            }
        }
        visit(h, &feats, &mut offset, &mut z, &mut sum_h, &mut marg, &mut pair_acc);
    }

    let nf = n as f64;
    let log_z = offset + z.ln() - nf * (order as f64).ln();
    let free_energy = log_z / nf;
    let mean_hamiltonian = sum_h / z / nf;
    marg.iter_mut().for_each(|v| *v /= z);
    pair_acc.iter_mut().for_each(|v| *v /= z);

    let mut nishimori_gap = Vec::with_capacity(nl);
    for (l, &k) in instance.layout.dims.iter().enumerate() {
        let o = instance.layout.offsets[l];
        let mut gap2 = 0.0;
        for col in 0..k {
            for row in 0..k {
                let (mut rep, mut tru) = (0.0, 0.0);
                for i in 0..n {
                    let mi = &marg[i * w..(i + 1) * w];
                    let si = instance.star(i);
                    for m in 0..k {
                        rep += mi[o + m + row * k] * mi[o + m + col * k];
                        tru += mi[o + m + row * k] * si[o + m + col * k];
                    }
                }
                gap2 += ((rep - tru) / nf).powi(2);
            }
        }
        nishimori_gap.push(gap2.sqrt());
    }

    let (overlap_sq_replicas, overlap_sq_truth, matrix_mmse) = if pairs_on {
        let mut reps = vec![0.0; nl];
        let mut tru = vec![0.0; nl];
        let mut mmse = vec![0.0; nl];
        let mut sig = vec![0.0; w];
        for j in 1..n {
            for i in 0..j {
                let base = pair_index(i, j) * w;
                let p = &pair_acc[base..base + w];
                star_outer(instance, i, j, &mut sig);
                for (l, &k) in instance.layout.dims.iter().enumerate() {
                    let o = instance.layout.offsets[l];
                    let r = o..o + k * k;
                    let pp: f64 = p[r.clone()].iter().map(|v| v * v).sum();
                    let ps: f64 = p[r.clone()].iter().zip(&sig[r.clone()]).map(|(a, b)| a * b).sum();
                    reps[l] += 2.0 * pp;
                    tru[l] += 2.0 * ps;
                    mmse[l] += k as f64 - 2.0 * ps + pp;
                }
            }
        }
        for (l, &k) in instance.layout.dims.iter().enumerate() {
            // Diagonal terms i = j contribute ‖I‖² = k to both.
            reps[l] = (reps[l] + nf * k as f64) / (nf * nf);
            tru[l] = (tru[l] + nf * k as f64) / (nf * nf);
            mmse[l] /= n_pairs as f64;
        }
        (Some(reps), Some(tru), Some(mmse))
    } else {
        (None, None, None)
    };

    Ok(ExactReport {
        free_energy,
        mean_hamiltonian,
        nishimori_gap,
        overlap_sq_replicas,
        overlap_sq_truth,
        matrix_mmse,
        configurations: size,
    })
}

/// Flattened `φ(g*_i) φ(g*_j)ᵀ` (without the SNR factor).
pub(crate) fn star_outer(instance: &SyncInstance, i: usize, j: usize, out: &mut [f64]) {
    let (a, b) = (instance.star(i), instance.star(j));
    for (l, &k) in instance.layout.dims.iter().enumerate() {
        let o = instance.layout.offsets[l];
        for col in 0..k {
            for row in 0..k {
                let mut acc = 0.0;
                for m in 0..k {
                    acc += a[o + row + m * k] * b[o + col + m * k];
                }
                out[o + row + col * k] = acc;
            }
        }
    }
}
