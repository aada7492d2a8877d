//! Replica potential, its derivatives, fixed points and thresholds.

mod landscape;
mod sok;
mod so2;

pub use landscape::{default_starts, landscape_scan, landscape_scan_from, FixedPointClass, LandscapeReport};
pub use sok::{abelian_diagonal_check, sok_rank_one_branch, DiagonalReport, RankOneBranch};
pub use so2::so2_solve;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::group::{RepChannel, RepClassification};
use crate::linalg::{frob_dot, sym_eigenvalues};
use crate::single_letter::{EstimatorConfig, Overlap, SingleLetter};
use crate::stats::{accumulate_with, Estimate};

/// Result of maximizing the replica potential from one start.
#[derive(Debug, Clone)]
pub struct ReplicaSolution {
    pub q_star: Overlap,
    pub psi_value: f64,
    pub psi_stderr: f64,
    /// Nats per sample.
    pub mi_limit: f64,
    pub mmse_limits: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    /// Tolerance the residual was compared against.
    pub tol: f64,
}

impl ReplicaSolution {
    pub(crate) fn assemble(
        channels: &[RepChannel],
        q: Overlap,
        psi: Estimate,
        converged: bool,
        iterations: usize,
        residual: f64,
        tol: f64,
    ) -> Self {
        let mi_limit = information_scale(channels) - psi.value;
        let mmse_limits = channels.iter().zip(&q.blocks).map(|(c, b)| c.dim() as f64 - b.norm_squared()).collect();
        Self {
            q_star: q,
            psi_value: psi.value,
            psi_stderr: psi.stderr,
            mi_limit,
            mmse_limits,
            converged,
            iterations,
            residual,
            tol,
        }
    }
}

/// `¼ Σ λ_ℓ k_ℓ`, the mutual information at `q = 0` offset.
pub fn information_scale(channels: &[RepChannel]) -> f64 {
    0.25 * channels.iter().map(|c| c.snr * c.dim() as f64).sum::<f64>()
}

/// Curvature of the potential at the origin along `I/√k_ℓ`.
#[derive(Debug, Clone, Serialize)]
pub struct HessianReport {
    pub block_max_eigs: Vec<f64>,
    pub effective_snrs: Vec<f64>,
    pub stable_at_zero: bool,
}

/// Damped iteration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPointOptions {
    pub damping: f64,
    /// `None` uses `max(1e-4, 3·stderr)` with the state map's largest entry error.
    pub tol: Option<f64>,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { damping: 0.5, tol: None, max_iter: 500 }
    }
}

impl FixedPointOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(invalid(format!("tolerance must be positive, got {t}")));
            }
        }
        Ok(())
    }

    pub(crate) fn effective_tol(&self, stderr: f64) -> f64 {
        self.tol.unwrap_or_else(|| (3.0 * stderr).max(1e-4))
    }
}

fn deterministic_part(channels: &[RepChannel], q: &Overlap) -> f64 {
    channels
        .iter()
        .zip(&q.blocks)
        .map(|(c, b)| -0.25 * c.snr * b.norm_squared() - 0.5 * c.snr * b.trace())
        .sum()
}

/// `Ψ_gs(q) = −¼Σλ‖q‖² − ½Σλ Tr q + E log E_g exp(Σ⟨g_ℓ, √λ_ℓ y_ℓ q_ℓ^{1/2}⟩)`.
pub fn psi_gs(channels: &[RepChannel], q: &Overlap, cfg: &EstimatorConfig) -> Result<Estimate> {
    let sl = SingleLetter::new(channels, cfg)?;
    psi_with(&sl, q)
}

pub(crate) fn psi_with(sl: &SingleLetter, q: &Overlap) -> Result<Estimate> {
    let stats = sl.evaluate(q)?;
    Ok(Estimate { value: deterministic_part(sl.channels(), q) + stats.log_partition.value, stderr: stats.log_partition.stderr })
}

/// Gradient blocks `−(λ_ℓ/2)(q_ℓ − E⟨g_ℓ⟩ᵀ⟨g_ℓ⟩)` and their entry-wise errors.
pub fn grad_psi(channels: &[RepChannel], q: &Overlap, cfg: &EstimatorConfig) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let sl = SingleLetter::new(channels, cfg)?;
    let stats = sl.evaluate(q)?;
    let grad = channels
        .iter()
        .zip(&q.blocks)
        .zip(&stats.second_moment)
        .map(|((c, qb), m)| (qb - m) * (-0.5 * c.snr))
        .collect();
    let se = channels.iter().zip(&stats.second_moment_stderr).map(|(c, s)| s * (0.5 * c.snr)).collect();
    Ok((grad, se))
}

/// Comparison of the analytic directional derivative with a common-random-number
/// central difference.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DerivativeCheck {
    pub analytic: f64,
    pub finite_difference: f64,
    /// Standard error of the per-sample difference between the two.
    pub stderr: f64,
    pub step: f64,
}

impl DerivativeCheck {
    pub fn discrepancy(&self) -> f64 {
        (self.analytic - self.finite_difference).abs()
    }
}

/// Check `⟨∇Ψ(q), X⟩` against `(Ψ(q + hX) − Ψ(q − hX)) / 2h` sample by sample.
/// The step is reduced if needed to keep `q ± hX` positive semidefinite.
pub fn gradient_check(
    channels: &[RepChannel],
    q: &Overlap,
    direction: &[DMatrix<f64>],
    step: f64,
    cfg: &EstimatorConfig,
) -> Result<DerivativeCheck> {
    let sl = SingleLetter::new(channels, cfg)?;
    q.check_against(channels)?;
    if direction.len() != channels.len() {
        return Err(invalid("direction must have one block per channel"));
    }
    let mut h = step;
    for (b, x) in q.blocks.iter().zip(direction) {
        let lo = sym_eigenvalues(b)[0];
        let xn = x.norm();
        if xn > 0.0 {
            if lo <= 0.0 {
                return Err(invalid("gradient check needs a positive definite base point"));
            }
            h = h.min(0.5 * lo / xn);
        }
    }
    let plus = Overlap::project(q.blocks.iter().zip(direction).map(|(b, x)| b + x * h).collect())?;
    let minus = Overlap::project(q.blocks.iter().zip(direction).map(|(b, x)| b - x * h).collect())?;
    let preps = [sl.prepare(q), sl.prepare(&plus), sl.prepare(&minus)];
    let nl = channels.len();

    // Deterministic parts of both sides.
    let det_fd = (deterministic_part(channels, &plus) - deterministic_part(channels, &minus)) / (2.0 * h);
    let det_an: f64 = channels
        .iter()
        .zip(&q.blocks)
        .zip(direction)
        .map(|((c, b), x)| -0.5 * c.snr * frob_dot(b, x))
        .sum();

    let signs: &[f64] = if sl.cfg.antithetic { &[1.0, -1.0] } else { &[1.0] };
    let scale = 1.0 / signs.len() as f64;
    let failure = std::sync::Mutex::new(None::<Error>);
    let acc = accumulate_with(sl.cfg.mc_samples, 3, |c| sl.workspace(c), |ws, _, out| {
        sl.outer_draw(ws);
        for &s in signs {
            let mut lz = [0.0; 3];
            for (t, p) in preps.iter().enumerate() {
                sl.field(p, &ws.star, &ws.z, s, &mut ws.b);
                match sl.posterior_flat(&ws.b, &mut ws.scratch, &mut ws.mean) {
                    Ok(v) => lz[t] = v,
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e);
                        return;
                    }
                }
                if t == 0 {
                    let mut an = 0.0;
                    for l in 0..nl {
                        let m = sl.layout.block_matrix(l, &ws.mean);
                        an += 0.5 * channels[l].snr * frob_dot(&(m.transpose() * &m), &direction[l]);
                    }
                    out[0] += scale * an;
                }
            }
            out[1] += scale * (lz[1] - lz[2]) / (2.0 * h);
        }
        out[2] = out[1] - out[0];
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(DerivativeCheck {
        analytic: det_an + acc.mean(0),
        finite_difference: det_fd + acc.mean(1),
        stderr: acc.stderr(2),
        step: h,
    })
}

/// Finite-difference probe of the Hessian: `⟨(∇Ψ(q + hY) − ∇Ψ(q − hY))/2h, X⟩`
/// using common random numbers.
pub fn hessian_probe(
    channels: &[RepChannel],
    q: &Overlap,
    x: &[DMatrix<f64>],
    y: &[DMatrix<f64>],
    step: f64,
    cfg: &EstimatorConfig,
) -> Result<f64> {
    let plus = Overlap::project(q.blocks.iter().zip(y).map(|(b, d)| b + d * step).collect())?;
    let minus = Overlap::project(q.blocks.iter().zip(y).map(|(b, d)| b - d * step).collect())?;
    let (gp, _) = grad_psi(channels, &plus, cfg)?;
    let (gm, _) = grad_psi(channels, &minus, cfg)?;
    Ok(gp.iter().zip(&gm).zip(x).map(|((a, b), d)| frob_dot(&(a - b), d)).sum::<f64>() / (2.0 * step))
}

/// Closed-form Hessian at `q = 0`: block eigenvalue `(−λk + λ²ρ)/(2k)` along `I/√k`.
pub fn hessian_at_zero(channels: &[RepChannel], classifications: &[RepClassification]) -> Result<HessianReport> {
    if channels.len() != classifications.len() {
        return Err(invalid("one classification per channel is required"));
    }
    let mut block_max_eigs = Vec::with_capacity(channels.len());
    let mut effective_snrs = Vec::with_capacity(channels.len());
    for (l, (c, cl)) in channels.iter().zip(classifications).enumerate() {
        let rho = cl.type_tag.rho().ok_or(Error::ClassificationNeeded(l))?;
        let k = c.dim() as f64;
        let lam = c.snr;
        block_max_eigs.push((-lam * k + lam * lam * rho) / (2.0 * k));
        effective_snrs.push(lam * rho / k);
    }
    let stable_at_zero = effective_snrs.iter().all(|&s| s < 1.0);
    Ok(HessianReport { block_max_eigs, effective_snrs, stable_at_zero })
}

/// Damped state-evolution iteration `q ← (1−d)q + d·F(q)` from `q0`.
pub fn solve_fixed_point(
    channels: &[RepChannel],
    q0: &Overlap,
    opts: &FixedPointOptions,
    cfg: &EstimatorConfig,
) -> Result<ReplicaSolution> {
    let sl = SingleLetter::new(channels, cfg)?;
    solve_with(&sl, q0, opts)
}

pub(crate) fn solve_with(sl: &SingleLetter, q0: &Overlap, opts: &FixedPointOptions) -> Result<ReplicaSolution> {
    opts.validate()?;
    let channels = sl.channels();
    q0.check_against(channels)?;
    let mut q = Overlap::project(q0.blocks.clone())?;
    let mut iterations = 0;
    loop {
        let (f, stats) = sl.state_map(&q)?;
        let residual = q.max_distance(&f);
        let tol = opts.effective_tol(stats.max_stderr());
        let converged = residual <= tol;
        if converged || iterations >= opts.max_iter {
            let psi = Estimate {
                value: deterministic_part(channels, &q) + stats.log_partition.value,
                stderr: stats.log_partition.stderr,
            };
            return Ok(ReplicaSolution::assemble(channels, q, psi, converged, iterations, residual, tol));
        }
        let d = opts.damping;
        q = Overlap::project(q.blocks.iter().zip(&f.blocks).map(|(a, b)| a * (1.0 - d) + b * d).collect())?;
        iterations += 1;
    }
}
