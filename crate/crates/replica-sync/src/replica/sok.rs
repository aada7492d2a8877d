use nalgebra::DMatrix;
use serde::Serialize;

use super::{psi_with, FixedPointOptions};
use crate::error::{Error, Result};
use crate::group::{GroupSpec, RepChannel};
use crate::single_letter::{EstimatorConfig, Overlap, SingleLetter};

/// Scalar branch `q ↦ F_11(diag(q, 0, …, 0))` of the SO(k) standard channel.
#[derive(Debug, Clone, Serialize)]
pub struct RankOneBranch {
    pub q_star: f64,
    pub slope_at_zero: f64,
    pub slope_stderr: f64,
    pub psi_value: f64,
    pub psi_stderr: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

const SLOPE_STEP: f64 = 1e-3;
const START: f64 = 0.5;

/// Iterate the rank-one branch from `q = 0.5` and estimate its slope at the
/// origin, which should be `λ/k`.
pub fn sok_rank_one_branch(k: usize, lambda: f64, opts: &FixedPointOptions, cfg: &EstimatorConfig) -> Result<RankOneBranch> {
    if k < 3 {
        return Err(Error::InvalidInput(format!("rank-one branch needs k >= 3, got {k}")));
    }
    opts.validate()?;
    let channels = [RepChannel::sok(k, lambda)?];
    let sl = SingleLetter::new(&channels, cfg)?;
    let at = |q: f64| Overlap { blocks: vec![rank_one(k, q)] };
    let f11 = |q: f64| -> Result<(f64, f64)> {
        let s = sl.evaluate(&at(q))?;
        Ok((s.second_moment[0][(0, 0)], s.second_moment_stderr[0][(0, 0)]))
    };

    let (f0, s0) = f11(0.0)?;
    let (fh, sh) = f11(SLOPE_STEP)?;
    let slope_at_zero = (fh - f0) / SLOPE_STEP;
    let slope_stderr = (s0 * s0 + sh * sh).sqrt() / SLOPE_STEP;

    let mut q = START;
    let mut iterations = 0;
    let (converged, residual) = loop {
        let (f, se) = f11(q)?;
        let residual = (f - q).abs();
        if residual <= opts.effective_tol(se) {
            break (true, residual);
        }
        if iterations >= opts.max_iter {
            break (false, residual);
        }
        q = ((1.0 - opts.damping) * q + opts.damping * f).max(0.0);
        iterations += 1;
    };
    let psi = psi_with(&sl, &at(q))?;
    Ok(RankOneBranch {
        q_star: q,
        slope_at_zero,
        slope_stderr,
        psi_value: psi.value,
        psi_stderr: psi.stderr,
        converged,
        iterations,
        residual,
    })
}

fn rank_one(k: usize, q: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(k, k);
    m[(0, 0)] = q;
    m
}

/// Distance of each block from the multiples of the identity.
#[derive(Debug, Clone, Serialize)]
pub struct DiagonalReport {
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    pub threshold: f64,
    pub violation: bool,
}

/// For abelian groups, fixed points are multiples of the identity in every
/// block. Measures `max_ℓ ‖q_ℓ − (Tr q_ℓ / k_ℓ) I‖_F` and flags values above
/// `10·tol`.
pub fn abelian_diagonal_check(channels: &[RepChannel], q: &Overlap, tol: f64) -> Result<DiagonalReport> {
    q.check_against(channels)?;
    let group = channels[0].group;
    if !group.is_abelian() || matches!(group, GroupSpec::Symmetric(_)) {
        return Err(Error::Inapplicable(format!("{group} is not one of the abelian families")));
    }
    let deviations: Vec<f64> = q
        .blocks
        .iter()
        .map(|b| {
            let k = b.nrows();
            (b - DMatrix::identity(k, k) * (b.trace() / k as f64)).norm()
        })
        .collect();
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    let threshold = 10.0 * tol;
    Ok(DiagonalReport { deviations, max_deviation, threshold, violation: max_deviation > threshold })
}
