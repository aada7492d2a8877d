//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's numerical paths.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};

/// Gauss–Hermite rule for the standard normal, by Golub–Welsch.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> =
        (0..n).map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

pub fn normal_expectation(f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_hermite(160);
    x.iter().zip(&w).map(|(t, wt)| wt * f(*t)).sum()
}

fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `E tanh(λq + √(λq) Z)`.
pub fn z2_state(lambda: f64, q: f64) -> f64 {
    let s = (lambda * q).sqrt();
    normal_expectation(|z| (lambda * q + s * z).tanh())
}

/// `−λq²/4 − λq/2 + E log cosh(λq + √(λq) Z)`.
pub fn z2_psi(lambda: f64, q: f64) -> f64 {
    let s = (lambda * q).sqrt();
    -0.25 * lambda * q * q - 0.5 * lambda * q + normal_expectation(|z| log_cosh(lambda * q + s * z))
}

/// Largest root of `q = E tanh(λq + √(λq) Z)` by bisection.
pub fn z2_fixed_point(lambda: f64) -> f64 {
    if lambda <= 1.0 {
        return 0.0;
    }
    let g = |q: f64| z2_state(lambda, q) - q;
    let mut lo = 1e-6;
    while g(lo) <= 0.0 {
        lo *= 0.5;
    }
    let mut hi = 1.0;
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if g(m) > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

pub fn z2_sup_psi(lambda: f64) -> f64 {
    z2_psi(lambda, z2_fixed_point(lambda)).max(0.0)
}

/// `I_j(2x)/I_0(2x)` by direct log-space summation of the power series.
pub fn bessel_ratio_series(j: u32, x: f64, terms: usize) -> f64 {
    let lf = |n: usize| (1..=n).map(|i| (i as f64).ln()).sum::<f64>();
    let (mut s0, mut sj) = (0.0, 0.0);
    for m in 0..terms {
        s0 += (2.0 * m as f64 * x.ln() - 2.0 * lf(m)).exp();
        sj += ((2 * m + j as usize) as f64 * x.ln() - lf(m) - lf(m + j as usize)).exp();
    }
    sj / s0
}

/// Trapezoid average of `f(θ)` over the circle.
pub fn circle_mean(n: usize, f: impl Fn(f64) -> f64) -> f64 {
    (0..n).map(|m| f(std::f64::consts::TAU * m as f64 / n as f64)).sum::<f64>() / n as f64
}

/// Random symmetric direction with unit Frobenius norm.
pub fn random_symmetric(k: usize, rng: &mut impl rand::Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let s = (&a + a.transpose()) * 0.5;
    let n = s.norm();
    s / n
}

/// Random positive definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_pd(k: usize, lo: f64, hi: f64, rng: &mut impl rand::Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(k, k, |_, _| rng.gen::<f64>() - 0.5);
    let q = g.qr().q();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(k, |_, _| lo + (hi - lo) * rng.gen::<f64>()));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}
