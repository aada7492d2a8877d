use super::ReplicaSolution;
use crate::error::{invalid, Result};
use crate::group::RepChannel;
use crate::single_letter::{so2_f, so2_psi_scalar, Overlap};
use crate::stats::Estimate;

const BISECTION_WIDTH: f64 = 1e-15;

/// Full solution of a single SO(2) harmonic at SNR `λ`.
///
/// `F` is increasing and concave with `F(0) = 0`, `F′(0) = 1`, so `q = F(λq)`
/// has the root `0` alone for `λ ≤ 1` and one positive root otherwise, found
/// by bisection.
pub fn so2_solve(lambda: f64) -> Result<ReplicaSolution> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    let channels = [RepChannel::so2(1, lambda)?];
    if lambda <= 1.0 {
        return Ok(ReplicaSolution::assemble(&channels, Overlap::zeros(&channels), Estimate::exact(0.0), true, 0, 0.0, 0.0));
    }
    let g = |q: f64| so2_f(lambda * q) - q;
    let mut lo = 1e-3 * (lambda - 1.0).min(1.0);
    let mut steps = 0;
    while g(lo) <= 0.0 && lo > 1e-300 {
        lo *= 0.5;
        steps += 1;
    }
    let mut hi = 1.0;
    while hi - lo > BISECTION_WIDTH && steps < 400 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    let q = 0.5 * (lo + hi);
    let residual = g(q).abs();
    let psi = so2_psi_scalar(lambda, q);
    Ok(ReplicaSolution::assemble(
        &channels,
        Overlap::scalar(&channels, q),
        Estimate::exact(psi),
        residual <= 1e-10,
        steps,
        residual,
        1e-10,
    ))
}
