use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::Serialize;

use super::exact::star_outer;
use super::{gibbs_sweep, pair_index, GibbsChain, SyncInstance};
use crate::error::{invalid, Result};
use crate::group::{enumerate, GroupSpec, RepChannel, RepKind};
use crate::single_letter::Overlap;
use crate::stats::Estimate;

const BATCHES: usize = 20;

/// Constants of the model entering the finite-N error bounds.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModelConstants {
    /// `D = (Σ λ_ℓ k_ℓ)^{1/2}`.
    pub d_gn: f64,
    /// `K = Σ λ_ℓ k_ℓ`.
    pub k_gn: f64,
}

pub fn model_constants(channels: &[RepChannel]) -> ModelConstants {
    let k_gn: f64 = channels.iter().map(|c| c.snr * c.dim() as f64).sum();
    ModelConstants { d_gn: k_gn.sqrt(), k_gn }
}

/// Posterior-sample diagnostics of one chain.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    /// Not available from sampling alone; filled by exact enumeration.
    pub free_energy: Option<f64>,
    /// `⟨H⟩/N` with a batch-means standard error.
    pub mean_hamiltonian: Estimate,
    /// Posterior mean of `(1/N) Σ φ_ℓ(g_i)ᵀ φ_ℓ(g*_i)` per channel.
    pub overlap_blocks: Vec<Vec<f64>>,
    /// Per-sample `Σ_ℓ ‖overlap_ℓ‖_F²`, averaged.
    pub overlap_sq: f64,
    /// Per-sample distance to the orbit of the reference overlap, averaged.
    pub orbit_distance: Option<f64>,
    /// Fraction of samples with orbit distance above 0.1.
    pub orbit_exceed_fraction: Option<f64>,
    /// `(1/C(N,2)) Σ_{i<j} ‖φ(g*_i)φ(g*_j)ᵀ − mean[φ(g_i)φ(g_j)ᵀ]‖_F²` per channel.
    pub matrix_mmse_per_channel: Vec<f64>,
    /// `Σ_ℓ λ_ℓ |mean_{i<j}⟨P¹_ij, P²_ij⟩ − mean_{i<j}⟨Y*_ij, P_ij⟩|`, with `P¹, P²`
    /// pair means from the two halves of the run.
    pub nishimori_gap: f64,
    pub acceptance_rate: f64,
    pub proposal_scale: f64,
    pub samples: usize,
    pub d_gn: f64,
    pub k_gn: f64,
}

/// Run `burn_in` adaptive sweeps, freeze the kernel, then record `n_samples`
/// states `thinning` sweeps apart.
pub fn measure(
    instance: &SyncInstance,
    chain: &mut GibbsChain,
    burn_in: usize,
    n_samples: usize,
    thinning: usize,
    reference: Option<&Overlap>,
) -> Result<DiagnosticsReport> {
    if n_samples < 2 || thinning == 0 {
        return Err(invalid("measure needs n_samples >= 2 and thinning >= 1"));
    }
    if let Some(q) = reference {
        q.check_against(instance.channels())?;
    }
    let n = instance.n;
    let w = instance.layout.width;
    let nl = instance.layout.len();
    let n_pairs = instance.pairs();
    for _ in 0..burn_in {
        gibbs_sweep(instance, chain);
    }
    chain.freeze();

    let half = n_samples / 2;
    let mut pair_halves = [vec![0.0; n_pairs * w], vec![0.0; n_pairs * w]];
    let mut overlap_sum = vec![0.0; w];
    let mut overlap_sq = 0.0;
    let mut dist_sum = 0.0;
    let mut exceed = 0usize;
    let mut h_batches = vec![0.0; BATCHES];
    let mut h_counts = vec![0usize; BATCHES];
    let mut ov = vec![0.0; w];
    let mut tmp = vec![0.0; w];

    for s in 0..n_samples {
        for _ in 0..thinning {
            gibbs_sweep(instance, chain);
        }
        let b = s * BATCHES / n_samples;
        h_batches[b] += instance.hamiltonian(&chain.features) / n as f64;
        h_counts[b] += 1;

        sample_overlap(instance, &chain.features, &mut ov);
        for (a, v) in overlap_sum.iter_mut().zip(&ov) {
            *a += v;
        }
        overlap_sq += ov.iter().map(|v| v * v).sum::<f64>();
        if let Some(q) = reference {
            let d = orbit_distance(instance.channels(), &instance.layout.offsets, &ov, q)?;
            dist_sum += d;
            if d > 0.1 {
                exceed += 1;
            }
        }

        let acc = &mut pair_halves[usize::from(s >= half)];
        for j in 1..n {
            for i in 0..j {
                let base = pair_index(i, j) * w;
                outer_into(instance, &chain.features, i, j, &mut tmp);
                for t in 0..w {
                    acc[base + t] += tmp[t];
                }
            }
        }
    }

    let ns = n_samples as f64;
    let (n1, n2) = (half as f64, (n_samples - half) as f64);
    let mut mmse = vec![0.0; nl];
    let mut rep = vec![0.0; nl];
    let mut tru = vec![0.0; nl];
    let mut sig = vec![0.0; w];
    for j in 1..n {
        for i in 0..j {
            let base = pair_index(i, j) * w;
            star_outer(instance, i, j, &mut sig);
            for (l, &k) in instance.layout.dims.iter().enumerate() {
                let o = instance.layout.offsets[l];
                for t in o..o + k * k {
                    let a = pair_halves[0][base + t];
                    let b = pair_halves[1][base + t];
                    let p = (a + b) / ns;
                    mmse[l] += (sig[t] - p).powi(2);
                    rep[l] += (a / n1) * (b / n2);
                    tru[l] += sig[t] * p;
                }
            }
        }
    }
    let np = n_pairs as f64;
    let nishimori_gap = instance
        .channels()
        .iter()
        .enumerate()
        .map(|(l, c)| c.snr * ((rep[l] - tru[l]) / np).abs())
        .sum();
    mmse.iter_mut().for_each(|v| *v /= np);

    let batch_means: Vec<f64> = h_batches.iter().zip(&h_counts).filter(|(_, &c)| c > 0).map(|(s, &c)| s / c as f64).collect();
    let nb = batch_means.len() as f64;
    let hm = batch_means.iter().sum::<f64>() / nb;
    let hv = batch_means.iter().map(|v| (v - hm).powi(2)).sum::<f64>() / (nb - 1.0).max(1.0);

    let overlap_blocks = (0..nl)
        .map(|l| {
            let o = instance.layout.offsets[l];
            let k = instance.layout.dims[l];
            overlap_sum[o..o + k * k].iter().map(|v| v / ns).collect()
        })
        .collect();
    let constants = model_constants(instance.channels());
    Ok(DiagnosticsReport {
        free_energy: None,
        mean_hamiltonian: Estimate { value: hm, stderr: (hv / nb).sqrt() },
        overlap_blocks,
        overlap_sq: overlap_sq / ns,
        orbit_distance: reference.map(|_| dist_sum / ns),
        orbit_exceed_fraction: reference.map(|_| exceed as f64 / ns),
        matrix_mmse_per_channel: mmse,
        nishimori_gap,
        acceptance_rate: chain.acceptance_rate(),
        proposal_scale: chain.proposal_scale,
        samples: n_samples,
        d_gn: constants.d_gn,
        k_gn: constants.k_gn,
    })
}

/// `(1/N) Σ_i φ(g_i)ᵀ φ(g*_i)`, flattened.
pub(crate) fn sample_overlap(instance: &SyncInstance, feats: &[f64], out: &mut [f64]) {
    let w = instance.layout.width;
    out.iter_mut().for_each(|v| *v = 0.0);
    let inv = 1.0 / instance.n as f64;
    for i in 0..instance.n {
        let (g, s) = (&feats[i * w..(i + 1) * w], instance.star(i));
        for (l, &k) in instance.layout.dims.iter().enumerate() {
            let o = instance.layout.offsets[l];
            for col in 0..k {
                for row in 0..k {
                    let mut acc = 0.0;
                    for m in 0..k {
                        acc += g[o + m + row * k] * s[o + m + col * k];
                    }
                    out[o + row + col * k] += inv * acc;
                }
            }
        }
    }
}

fn outer_into(instance: &SyncInstance, feats: &[f64], i: usize, j: usize, out: &mut [f64]) {
    let w = instance.layout.width;
    let (a, b) = (&feats[i * w..(i + 1) * w], &feats[j * w..(j + 1) * w]);
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

/// `min_h Σ_ℓ λ_ℓ ‖O_ℓ − q*_ℓ φ_ℓ(h)‖_F²` for a flattened overlap `O`.
///
/// Closed form for a single SO(2) harmonic, grid search plus golden-section
/// refinement for several, enumeration for finite groups, and the special
/// orthogonal Procrustes solution for SO(k).
pub fn orbit_distance(channels: &[RepChannel], offsets: &[usize], overlap: &[f64], q: &Overlap) -> Result<f64> {
    let group = channels[0].group;
    let mut base = 0.0;
    let mut ms: Vec<DMatrix<f64>> = Vec::with_capacity(channels.len());
    for (l, c) in channels.iter().enumerate() {
        let k = c.dim();
        let o = DMatrix::from_column_slice(k, k, &overlap[offsets[l]..offsets[l] + k * k]);
        base += c.snr * (o.norm_squared() + q.blocks[l].norm_squared());
        // ⟨O, q φ(h)⟩ = ⟨q O, φ(h)⟩ for symmetric q.
        ms.push(&q.blocks[l] * o * c.snr);
    }
    let best = match group {
        GroupSpec::SO2 => {
            let terms: Vec<(f64, f64, f64)> = channels
                .iter()
                .zip(&ms)
                .map(|(c, m)| {
                    let RepKind::SO2Harmonic(h) = c.rep else { unreachable!() };
                    // ⟨M, R(hθ)⟩ = a cos hθ + b sin hθ
                    (h as f64, m[(0, 0)] + m[(1, 1)], m[(1, 0)] - m[(0, 1)])
                })
                .collect();
            if terms.len() == 1 {
                terms[0].1.hypot(terms[0].2)
            } else {
                let f = |t: f64| terms.iter().map(|(h, a, b)| a * (h * t).cos() + b * (h * t).sin()).sum::<f64>();
                maximize_periodic(f)
            }
        }
        GroupSpec::SOk(_) => special_procrustes(&ms[0]),
        g => {
            let elems = enumerate(&g)?;
            elems
                .iter()
                .map(|h| {
                    channels
                        .iter()
                        .zip(&ms)
                        .map(|(c, m)| crate::linalg::frob_dot(m, &crate::group::represent(c, h).expect("same group")))
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max)
        }
    };
    Ok((base - 2.0 * best).max(0.0))
}

fn maximize_periodic(f: impl Fn(f64) -> f64) -> f64 {
    const GRID: usize = 2048;
    let h = TAU / GRID as f64;
    let (mut bt, mut bv) = (0.0, f64::NEG_INFINITY);
    for i in 0..GRID {
        let t = i as f64 * h;
        let v = f(t);
        if v > bv {
            bt = t;
            bv = v;
        }
    }
    let (mut a, mut b) = (bt - h, bt + h);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    bv.max(f(0.5 * (a + b)))
}

/// `max_{R ∈ SO(k)} ⟨M, R⟩`.
fn special_procrustes(m: &DMatrix<f64>) -> f64 {
    let svd = m.clone().svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    let det = (u * vt).determinant();
    if det < 0.0 {
        // Flip the smallest singular direction.
        let (imin, _) = s.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        s[imin] = -s[imin];
    }
    s.iter().sum()
}

