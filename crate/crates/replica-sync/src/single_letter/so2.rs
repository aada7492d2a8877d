//! Closed-form SO(2) channel.
//!
//! Under `y = √γ g* + z` on SO(2), rotating by `g*` reduces the observation
//! to the complex statistic `√γ + z_c` with `Re z_c, Im z_c ~ N(0, ½)`. Its
//! modulus `r` is Rician with density `2r e^{−(r−√γ)²} e^{−2√γ r} I_0(2√γ r)`
//! and the posterior mean of `e^{iθ}` has modulus `u_1(√γ r)`.

use super::bessel::{i0e, log_i0, so2_moment_ratio};
use crate::quadrature::gauss_legendre;

const PANEL_NODES: usize = 24;
const PANELS: usize = 16;
const HALF_WIDTH: f64 = 9.0;

/// `E f(r)` over the Rician modulus at SNR `γ`.
pub fn rician_expectation(gamma: f64, f: impl Fn(f64) -> f64) -> f64 {
    let s = gamma.max(0.0).sqrt();
    let lo = (s - HALF_WIDTH).max(0.0);
    let hi = s + HALF_WIDTH;
    let (x, w) = gauss_legendre(PANEL_NODES);
    let step = (hi - lo) / PANELS as f64;
    let mut acc = 0.0;
    for p in 0..PANELS {
        let a = lo + p as f64 * step;
        for (t, wt) in x.iter().zip(&w) {
            let r = a + 0.5 * step * (t + 1.0);
            let dens = 2.0 * r * (-(r - s) * (r - s)).exp() * i0e(2.0 * s * r);
            acc += 0.5 * step * wt * dens * f(r);
        }
    }
    acc
}

/// `F(γ) = E|⟨e^{iθ}⟩|² = 1 − ½·mmse(γ)`.
pub fn so2_f(gamma: f64) -> f64 {
    if gamma <= 0.0 {
        return 0.0;
    }
    let s = gamma.sqrt();
    rician_expectation(gamma, |r| so2_moment_ratio(1, s * r).powi(2))
}

/// Matrix MMSE of the SO(2) channel, `2(1 − F(γ))`.
pub fn so2_mmse(gamma: f64) -> f64 {
    2.0 * (1.0 - so2_f(gamma))
}

/// Mutual information of the SO(2) channel, `2γ − E ln I_0(2√γ r)`.
pub fn so2_mutual_info(gamma: f64) -> f64 {
    if gamma <= 0.0 {
        return 0.0;
    }
    let s = gamma.sqrt();
    2.0 * gamma - rician_expectation(gamma, |r| log_i0(2.0 * s * r))
}

/// Replica potential restricted to `q·I` on one SO(2) harmonic:
/// `−λq²/2 + λq − i(λq)`.
pub fn so2_psi_scalar(lambda: f64, q: f64) -> f64 {
    -0.5 * lambda * q * q + lambda * q - so2_mutual_info(lambda * q)
}

/// Derivative estimate of `F` at the origin. `F` is only defined for
/// `γ ≥ 0`, so the symmetric difference is centred at `h`.
pub fn so2_f_slope_at_zero(h: f64) -> f64 {
    (so2_f(2.0 * h) - so2_f(0.0)) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_normalized() {
        for g in [0.0, 0.1, 1.0, 10.0, 400.0] {
            assert!((rician_expectation(g, |_| 1.0) - 1.0).abs() < 1e-12, "γ={g}");
        }
    }

    #[test]
    fn second_moment_of_modulus() {
        // E r² = γ + 1
        for g in [0.3, 2.0, 25.0] {
            assert!((rician_expectation(g, |r| r * r) - (g + 1.0)).abs() < 1e-11);
        }
    }

    #[test]
    fn small_snr_information() {
        let g = 1e-4;
        assert!((so2_mutual_info(g) / g - 1.0).abs() < 1e-3);
    }
}
