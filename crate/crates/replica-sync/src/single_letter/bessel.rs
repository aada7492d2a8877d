//! Modified Bessel functions of the first kind, as needed by the SO(2) channel.

/// Switch from the power series to backward recurrence.
const SERIES_MAX_X: f64 = 20.0;
const REL_TRUNC: f64 = 1e-16;

/// `u_j(x) = I_j(2x) / I_0(2x)` for `x ≥ 0`.
///
/// Power series for `x ≤ 20`, Miller's backward recurrence on the ratios
/// `I_i/I_{i−1}` above that.
pub fn so2_moment_ratio(j: u32, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if j == 0 {
        return 1.0;
    }
    if x == 0.0 {
        return 0.0;
    }
    if x <= SERIES_MAX_X {
        series_ratio(j, x)
    } else {
        miller_ratio(j, 2.0 * x)
    }
}

fn series_ratio(j: u32, x: f64) -> f64 {
    let x2 = x * x;
    let jf = j as f64;
    // b_0 = x^j / j!
    let mut b = (1..=j).fold(1.0, |acc, i| acc * x / i as f64);
    let mut a = 1.0;
    let (mut sa, mut sb) = (0.0, 0.0);
    let mut m = 0.0;
    loop {
        sa += a;
        sb += b;
        a *= x2 / ((m + 1.0) * (m + 1.0));
        b *= x2 / ((m + 1.0) * (m + 1.0 + jf));
        m += 1.0;
        if m > x && a <= REL_TRUNC * sa && b <= REL_TRUNC * sb {
            break;
        }
    }
    (sb / sa).clamp(0.0, 1.0)
}

/// Ratio `I_j(z)/I_0(z)` by backward recurrence `r_i = 1/(2i/z + r_{i+1})`,
/// seeded with the uniform asymptotic estimate of `r_{J+1}` and extended until
/// two depths agree.
fn miller_ratio(j: u32, z: f64) -> f64 {
    let run = |depth: usize| -> f64 {
        let top = j as usize + depth;
        let nu = (top + 1) as f64;
        let mut r = z / (nu + (nu * nu + z * z).sqrt());
        let mut prod = 1.0;
        for i in (1..=top).rev() {
            r = 1.0 / (2.0 * i as f64 / z + r);
            if i <= j as usize {
                prod *= r;
            }
        }
        prod
    };
    let mut depth = 32;
    let mut prev = run(depth);
    loop {
        depth *= 2;
        let cur = run(depth);
        if (cur - prev).abs() <= 1e-16 * cur.abs() || depth > 1 << 20 {
            return cur.clamp(0.0, 1.0);
        }
        prev = cur;
    }
}

/// `ln I_0(z)` for `z ≥ 0`.
pub fn log_i0(z: f64) -> f64 {
    debug_assert!(z >= 0.0);
    if z <= 30.0 {
        let t = 0.25 * z * z;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut m = 1.0;
        loop {
            term *= t / (m * m);
            sum += term;
            if term <= REL_TRUNC * sum && m > 0.5 * z {
                break;
            }
            m += 1.0;
        }
        sum.ln()
    } else {
        // e^z/√(2πz) · Σ_k ((2k−1)!!)² / (k! (8z)^k)
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            let kf = k as f64;
            let next = term * (2.0 * kf - 1.0).powi(2) / (8.0 * kf * z);
            if next.abs() >= term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term.abs() <= REL_TRUNC * sum {
                break;
            }
        }
        z - 0.5 * (std::f64::consts::TAU * z).ln() + sum.ln()
    }
}

/// Exponentially scaled `e^{−z} I_0(z)`.
pub fn i0e(z: f64) -> f64 {
    (log_i0(z) - z).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(j: u32, x: f64, terms: usize) -> f64 {
        let mut s0 = 0.0;
        let mut sj = 0.0;
        let lf = |n: usize| (1..=n).map(|i| (i as f64).ln()).sum::<f64>();
        for m in 0..terms {
            s0 += (2.0 * m as f64 * x.ln() - 2.0 * lf(m)).exp();
            sj += ((2 * m + j as usize) as f64 * x.ln() - lf(m) - lf(m + j as usize)).exp();
        }
        sj / s0
    }

    #[test]
    fn series_and_recurrence_agree_at_switch() {
        for j in 1..=8 {
            let a = series_ratio(j, 20.0);
            let b = miller_ratio(j, 40.0);
            assert!((a - b).abs() < 1e-13, "j={j}: {a} vs {b}");
        }
    }

    #[test]
    fn matches_long_series() {
        for &x in &[0.3, 2.0, 10.0, 19.0] {
            for j in 1..=4 {
                assert!((so2_moment_ratio(j, x) - direct(j, x, 400)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn log_i0_branches_meet() {
        let below = {
            let t = 0.25 * 900.0f64;
            let mut term = 1.0;
            let mut sum = 1.0;
            for m in 1..200 {
                term *= t / (m as f64 * m as f64);
                sum += term;
            }
            sum.ln()
        };
        assert!((log_i0(30.0 + 1e-12) - below).abs() < 1e-12);
        assert!(log_i0(0.0).abs() < 1e-16);
    }

    #[test]
    fn large_argument_ratio_is_close_to_one() {
        let u = so2_moment_ratio(1, 500.0);
        // I1/I0(z) ≈ 1 − 1/(2z) − 1/(8z²)
        let z = 1000.0;
        assert!((u - (1.0 - 0.5 / z - 0.125 / (z * z))).abs() < 1e-8);
    }
}
