use nalgebra::DMatrix;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::kernel::{mercer_truncate, KernelSpec, MercerTruncation};
use crate::error::{invalid, Result};
use crate::linalg::{psd_clip, sym_sqrt, symmetrize};
use crate::replica::FixedPointOptions;
use crate::rng::{derive, stream, tag};
use crate::single_letter::EstimatorConfig;
use crate::stats::{accumulate_with, Estimate, VecMoments};

/// Cauchy gap above which the last value is flagged as unreliable.
pub const CAUCHY_TOL: f64 = 1e-3;
/// Jump in `‖q*‖_F` between adjacent scales flagged as a possible kink.
pub const JUMP_FLAG: f64 = 0.05;

/// Single-letter channel of the decoupled assignment problem at rank `L`.
struct QaChannel<'a> {
    /// Node embedding `u(x_a)`, one row per node.
    u: DMatrix<f64>,
    log_w: Vec<f64>,
    sampler: WeightedIndex<f64>,
    cfg: &'a EstimatorConfig,
}

/// Per-sample record: `[log Z, D₁, D₂, log Z·D₁, log Z·D₂, D₁², D₂², D₁D₂ | ⟨u⟩⟨u⟩ᵀ]`,
/// where `D₁ = u*ᵀq^{1/2}z` and `D₂ = ūᵀq^{1/2}z` have mean zero exactly.
struct QaStats {
    moments: VecMoments,
    l: usize,
}

const MOMENTS_AT: usize = 8;

impl QaStats {
    /// `E log Z` with the two control variates removed by least squares.
    fn log_partition(&self) -> Estimate {
        let m = &self.moments;
        let n = m.n as f64;
        let mean = |i: usize| m.mean(i);
        let cov = |a: f64, b: usize, c: usize| a - mean(b) * mean(c);
        let var_y = m.stderr(0).powi(2) * n;
        let s_dy = [cov(mean(3), 0, 1), cov(mean(4), 0, 2)];
        let s_dd = [[cov(mean(5), 1, 1), cov(mean(7), 1, 2)], [cov(mean(7), 1, 2), cov(mean(6), 2, 2)]];
        let det = s_dd[0][0] * s_dd[1][1] - s_dd[0][1] * s_dd[1][0];
        let beta = if det > 1e-12 * (s_dd[0][0] * s_dd[1][1]).max(1e-300) {
            [(s_dd[1][1] * s_dy[0] - s_dd[0][1] * s_dy[1]) / det, (s_dd[0][0] * s_dy[1] - s_dd[1][0] * s_dy[0]) / det]
        } else if s_dd[0][0] > 1e-300 {
            [s_dy[0] / s_dd[0][0], 0.0]
        } else {
            [0.0, 0.0]
        };
        let value = mean(0) - beta[0] * mean(1) - beta[1] * mean(2);
        let resid = (var_y - beta[0] * s_dy[0] - beta[1] * s_dy[1]).max(0.0);
        Estimate { value, stderr: (resid / n).sqrt() }
    }

    fn second_moment(&self) -> (DMatrix<f64>, f64) {
        let l = self.l;
        let m = DMatrix::from_fn(l, l, |r, c| self.moments.mean(MOMENTS_AT + r + c * l));
        let se = (0..l * l).map(|i| self.moments.stderr(MOMENTS_AT + i)).fold(0.0, f64::max);
        (symmetrize(&m), se)
    }
}

impl<'a> QaChannel<'a> {
    fn new(trunc: &MercerTruncation, cfg: &'a EstimatorConfig) -> Result<Self> {
        cfg.validate()?;
        let sampler = WeightedIndex::new(&trunc.weights).map_err(|e| invalid(format!("base weights: {e}")))?;
        Ok(Self { u: trunc.node_embedding(), log_w: trunc.weights.iter().map(|w| w.ln()).collect(), sampler, cfg })
    }

    fn rank(&self) -> usize {
        self.u.ncols()
    }

    fn evaluate(&self, q: &DMatrix<f64>) -> Result<QaStats> {
        let l = self.rank();
        if q.nrows() != l || q.ncols() != l {
            return Err(invalid(format!("overlap must be {l}x{l}, got {}x{}", q.nrows(), q.ncols())));
        }
        let root = sym_sqrt(q);
        let qu = &self.u * q;
        let n = self.u.nrows();
        let base: Vec<f64> = (0..n)
            .map(|a| self.log_w[a] - 0.5 * (0..l).map(|i| qu[(a, i)] * self.u[(a, i)]).sum::<f64>())
            .collect();
        let ubar: Vec<f64> = (0..l).map(|r| (0..n).map(|a| self.log_w[a].exp() * self.u[(a, r)]).sum()).collect();
        let seed = derive(self.cfg.seed, tag::OUTER);
        let signs: &[f64] = if self.cfg.antithetic { &[1.0, -1.0] } else { &[1.0] };
        let weight = 1.0 / signs.len() as f64;
        let moments = accumulate_with(
            self.cfg.mc_samples,
            MOMENTS_AT + l * l,
            |_| (vec![0.0; n], vec![0.0; l], vec![0.0; l], vec![0.0; l]),
            |(e, z, s, mean), i, out| {
                // One stream per sample keeps the first L normals shared across ranks.
                let mut rng = stream(seed, i as u64);
                let star = self.sampler.sample(&mut rng);
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                for &sign in signs {
                    for r in 0..l {
                        s[r] = sign * (0..l).map(|c| root[(r, c)] * z[c]).sum::<f64>();
                    }
                    for a in 0..n {
                        e[a] = base[a] + (0..l).map(|r| qu[(a, r)] * self.u[(star, r)] + self.u[(a, r)] * s[r]).sum::<f64>();
                    }
                    let mx = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut tot = 0.0;
                    mean.iter_mut().for_each(|v| *v = 0.0);
                    for a in 0..n {
                        let p = (e[a] - mx).exp();
                        tot += p;
                        for r in 0..l {
                            mean[r] += p * self.u[(a, r)];
                        }
                    }
                    mean.iter_mut().for_each(|v| *v /= tot);
                    out[0] += weight * (mx + tot.ln());
                    out[1] += weight * (0..l).map(|r| self.u[(star, r)] * s[r]).sum::<f64>();
                    out[2] += weight * (0..l).map(|r| ubar[r] * s[r]).sum::<f64>();
                    for c in 0..l {
                        for r in 0..l {
                            out[MOMENTS_AT + r + c * l] += weight * mean[r] * mean[c];
                        }
                    }
                }
                let (y, d1, d2) = (out[0], out[1], out[2]);
                out[3] = y * d1;
                out[4] = y * d2;
                out[5] = d1 * d1;
                out[6] = d2 * d2;
                out[7] = d1 * d2;
            },
        );
        Ok(QaStats { moments, l })
    }
}

fn check_psd(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    psd_clip(&symmetrize(q))
}

/// `Ψ_qa^L(q) = −¼‖q‖² + E log E_x exp(−½uᵀqu + uᵀq u* + uᵀq^{1/2}z)`.
pub fn psi_qa(trunc: &MercerTruncation, q: &DMatrix<f64>, cfg: &EstimatorConfig) -> Result<Estimate> {
    let q = check_psd(q)?;
    let ch = QaChannel::new(trunc, cfg)?;
    let lp = ch.evaluate(&q)?.log_partition();
    Ok(Estimate { value: -0.25 * q.norm_squared() + lp.value, stderr: lp.stderr })
}

/// `∇Ψ_qa^L = −½(q − E⟨u⟩⟨u⟩ᵀ)` and the largest entry error.
pub fn grad_psi_qa(trunc: &MercerTruncation, q: &DMatrix<f64>, cfg: &EstimatorConfig) -> Result<(DMatrix<f64>, f64)> {
    let q = check_psd(q)?;
    let ch = QaChannel::new(trunc, cfg)?;
    let (m, se) = ch.evaluate(&q)?.second_moment();
    Ok(((&q - m) * -0.5, 0.5 * se))
}

/// Maximizer of `Ψ_qa` at one rank.
#[derive(Debug, Clone, Serialize)]
pub struct QaLevel {
    pub rank: usize,
    pub q_star: DMatrix<f64>,
    pub q_frobenius: f64,
    pub psi_value: f64,
    pub psi_stderr: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub tol: f64,
}

/// Fixed-point iteration `q ← (1−d)q + d·E⟨u⟩⟨u⟩ᵀ` from `q0`.
///
/// The returned point is the best of the start and the final iterate, so a
/// warm start from a lower rank can never lose potential.
pub fn qa_solve(trunc: &MercerTruncation, q0: &DMatrix<f64>, opts: &FixedPointOptions, cfg: &EstimatorConfig) -> Result<QaLevel> {
    opts.validate()?;
    let ch = QaChannel::new(trunc, cfg)?;
    solve_channel(&ch, q0, opts)
}

fn solve_channel(ch: &QaChannel, q0: &DMatrix<f64>, opts: &FixedPointOptions) -> Result<QaLevel> {
    let l = ch.rank();
    let mut q = check_psd(q0)?;
    if q.nrows() != l {
        return Err(invalid(format!("start must be {l}x{l}")));
    }
    let mut start: Option<(DMatrix<f64>, Estimate)> = None;
    let mut iterations = 0;
    loop {
        let stats = ch.evaluate(&q)?;
        let (f, se) = stats.second_moment();
        let lp = stats.log_partition();
        let psi = Estimate { value: -0.25 * q.norm_squared() + lp.value, stderr: lp.stderr };
        if start.is_none() {
            start = Some((q.clone(), psi));
        }
        let residual = (&f - &q).abs().max();
        let tol = opts.effective_tol(se);
        let converged = residual <= tol;
        if converged || iterations >= opts.max_iter {
            let (q, psi) = match start {
                Some((q0, p0)) if p0.value > psi.value => (q0, p0),
                _ => (q, psi),
            };
            return Ok(QaLevel {
                rank: l,
                q_frobenius: q.norm(),
                q_star: q,
                psi_value: psi.value,
                psi_stderr: psi.stderr,
                converged,
                iterations,
                residual,
                tol,
            });
        }
        q = check_psd(&(&q * (1.0 - opts.damping) + f * opts.damping))?;
        iterations += 1;
    }
}

/// Limits of the assignment model assembled from a rank sweep.
#[derive(Debug, Clone, Serialize)]
pub struct QaSolution {
    pub levels: Vec<QaLevel>,
    /// Last (largest-rank) supremum; no extrapolation model is fitted.
    pub psi_infinity: f64,
    /// `|Ψ^{L_max} − Ψ^{L_prev}|`.
    pub cauchy_gap: f64,
    pub extrapolation_reliable: bool,
    /// `E[κ²]` by double quadrature.
    pub kappa_sq: f64,
    pub mi_limit: f64,
    pub mmse_limit: f64,
}

/// Solve at each rank in `ranks` (increasing), warm-starting each rank from
/// the previous maximizer padded with zeros.
pub fn qa_mi_mmse(
    kernel: &KernelSpec,
    ranks: &[usize],
    n_nodes: usize,
    opts: &FixedPointOptions,
    cfg: &EstimatorConfig,
) -> Result<QaSolution> {
    if ranks.is_empty() || ranks.windows(2).any(|w| w[0] >= w[1]) || ranks[0] == 0 {
        return Err(invalid("ranks must be a nonempty increasing list of positive integers"));
    }
    let full = mercer_truncate(kernel, *ranks.last().unwrap(), n_nodes)?;
    let mut levels: Vec<QaLevel> = Vec::new();
    for &l in ranks {
        let l = l.min(full.rank);
        if levels.last().is_some_and(|p| p.rank == l) {
            break;
        }
        let t = full.truncate(l)?;
        let ch = QaChannel::new(&t, cfg)?;
        let start = match levels.last() {
            Some(prev) => {
                let mut q = DMatrix::zeros(l, l);
                q.view_mut((0, 0), (prev.rank, prev.rank)).copy_from(&prev.q_star);
                q
            }
            None => DMatrix::from_diagonal_element(l, l, 0.5 * t.eigenvalues[0]),
        };
        let mut level = solve_channel(&ch, &start, opts)?;
        if let Some(prev) = levels.last() {
            // Restriction argument: the padded maximizer already attains the lower supremum.
            if prev.psi_value > level.psi_value {
                level.psi_value = prev.psi_value;
                level.psi_stderr = prev.psi_stderr;
                level.q_star = start;
                level.q_frobenius = level.q_star.norm();
            }
        }
        levels.push(level);
    }
    let last = levels.last().unwrap();
    // Past the kernel's true rank every further level repeats the last one.
    let saturated = *ranks.last().unwrap() > full.rank;
    let cauchy_gap = if saturated {
        0.0
    } else if levels.len() >= 2 { (last.psi_value - levels[levels.len() - 2].psi_value).abs() } else { f64::INFINITY };
    let kappa_sq = kernel.second_moment(n_nodes);
    Ok(QaSolution {
        psi_infinity: last.psi_value,
        cauchy_gap,
        extrapolation_reliable: cauchy_gap <= CAUCHY_TOL,
        kappa_sq,
        mi_limit: 0.25 * kappa_sq - last.psi_value,
        mmse_limit: kappa_sq - last.q_frobenius.powi(2),
        levels,
    })
}

/// One row of a kernel-scale sweep.
#[derive(Debug, Clone, Serialize)]
pub struct QaSweepRow {
    pub scale: f64,
    pub solution: QaSolution,
    /// `‖q*‖_F` jumped by more than [`JUMP_FLAG`] from the previous scale.
    pub possible_kink: bool,
}

/// Repeat [`qa_mi_mmse`] over kernel scales (sorted increasing).
pub fn qa_scale_sweep(
    kernel: &KernelSpec,
    scales: &[f64],
    ranks: &[usize],
    n_nodes: usize,
    opts: &FixedPointOptions,
    cfg: &EstimatorConfig,
) -> Result<Vec<QaSweepRow>> {
    let mut rows: Vec<QaSweepRow> = Vec::with_capacity(scales.len());
    for &s in scales {
        let solution = qa_mi_mmse(&kernel.clone().with_scale(s), ranks, n_nodes, opts, cfg)?;
        let q = solution.levels.last().unwrap().q_frobenius;
        let possible_kink = rows.last().is_some_and(|r| (r.solution.levels.last().unwrap().q_frobenius - q).abs() > JUMP_FLAG);
        rows.push(QaSweepRow { scale: s, solution, possible_kink });
    }
    Ok(rows)
}
