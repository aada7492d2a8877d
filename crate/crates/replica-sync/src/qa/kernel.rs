use nalgebra::{DMatrix, SymmetricEigen};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quadrature::gauss_legendre_on;

/// Eigenvalues below this are treated as rank deficiency.
pub const RANK_FLOOR: f64 = 1e-12;
const GRID: usize = 100;

/// Distribution of the latent labels `x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseMeasure {
    Rademacher,
    Uniform,
    Atoms { points: Vec<f64>, weights: Vec<f64> },
}

/// Kernel shape before scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// `f(x) f(y)` with `f(x) = Σ_i c_i x^i`.
    RankOne { coeffs: Vec<f64> },
    /// `Σ_ℓ μ_ℓ f_ℓ(x) f_ℓ(y)` with polynomial features.
    FiniteRank { weights: Vec<f64>, features: Vec<Vec<f64>> },
    /// `exp(−(x−y)²/(2h²))`.
    GaussianRbf { bandwidth: f64 },
}

/// A kernel `scale · κ(x, y)` on the support of `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub base: BaseMeasure,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

impl BaseMeasure {
    pub fn validate(&self) -> Result<()> {
        if let BaseMeasure::Atoms { points, weights } = self {
            if points.is_empty() || points.len() != weights.len() {
                return Err(invalid("atoms need matching non-empty points and weights"));
            }
            if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
                return Err(invalid("atom weights must be nonnegative with positive total"));
            }
        }
        Ok(())
    }

    /// Nodes and probability weights: Gauss–Legendre for the uniform law, the atoms otherwise.
    pub fn quadrature(&self, n_nodes: usize) -> (Vec<f64>, Vec<f64>) {
        match self {
            BaseMeasure::Rademacher => (vec![-1.0, 1.0], vec![0.5, 0.5]),
            BaseMeasure::Uniform => {
                let (x, w) = gauss_legendre_on(n_nodes, -1.0, 1.0);
                (x, w.iter().map(|v| v / 2.0).collect())
            }
            BaseMeasure::Atoms { points, weights } => {
                let t: f64 = weights.iter().sum();
                (points.clone(), weights.iter().map(|w| w / t).collect())
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, BaseMeasure::Uniform)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            BaseMeasure::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            BaseMeasure::Uniform => rng.gen_range(-1.0..1.0),
            BaseMeasure::Atoms { points, weights } => {
                let d = WeightedIndex::new(weights).expect("validated weights");
                points[d.sample(rng)]
            }
        }
    }

    /// Evaluation grid for sup-norm residuals.
    fn grid(&self) -> Vec<f64> {
        match self {
            BaseMeasure::Uniform => (0..GRID).map(|i| -1.0 + 2.0 * i as f64 / (GRID - 1) as f64).collect(),
            _ => self.quadrature(0).0,
        }
    }
}

impl KernelSpec {
    pub fn new(kind: KernelKind, base: BaseMeasure) -> Self {
        Self { kind, base, scale: 1.0 }
    }

    /// `κ(x, y) = xy`.
    pub fn linear(base: BaseMeasure) -> Self {
        Self::new(KernelKind::RankOne { coeffs: vec![0.0, 1.0] }, base)
    }

    pub fn rbf(bandwidth: f64, base: BaseMeasure) -> Self {
        Self::new(KernelKind::GaussianRbf { bandwidth }, base)
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(invalid(format!("kernel scale must be positive, got {}", self.scale)));
        }
        match &self.kind {
            KernelKind::RankOne { coeffs } if coeffs.is_empty() => Err(invalid("rank-one feature needs coefficients")),
            KernelKind::FiniteRank { weights, features } => {
                if weights.is_empty() || weights.len() != features.len() {
                    return Err(invalid("finite-rank kernel needs one feature per weight"));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(invalid("finite-rank weights must be nonnegative"));
                }
                Ok(())
            }
            KernelKind::GaussianRbf { bandwidth } if !(*bandwidth > 0.0) => Err(invalid("bandwidth must be positive")),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let k = match &self.kind {
            KernelKind::RankOne { coeffs } => poly(coeffs, x) * poly(coeffs, y),
            KernelKind::FiniteRank { weights, features } => {
                weights.iter().zip(features).map(|(m, c)| m * poly(c, x) * poly(c, y)).sum()
            }
            KernelKind::GaussianRbf { bandwidth } => (-(x - y).powi(2) / (2.0 * bandwidth * bandwidth)).exp(),
        };
        self.scale * k
    }

    /// `K₀ = max |κ|` over the evaluation grid.
    pub fn sup_bound(&self) -> f64 {
        let g = self.base.grid();
        g.iter().flat_map(|&x| g.iter().map(move |&y| (x, y))).map(|(x, y)| self.eval(x, y).abs()).fold(0.0, f64::max)
    }

    /// `E_{x,x'}[κ(x,x')²]` by double quadrature.
    pub fn second_moment(&self, n_nodes: usize) -> f64 {
        let (x, w) = self.base.quadrature(n_nodes);
        let mut s = 0.0;
        for (a, wa) in x.iter().zip(&w) {
            for (b, wb) in x.iter().zip(&w) {
                s += wa * wb * self.eval(*a, *b).powi(2);
            }
        }
        s
    }

    /// `Σ_{ℓ,m} μ_ℓ μ_m (E f_ℓ f_m)²` for explicit finite-rank kernels.
    pub fn finite_rank_second_moment(&self, n_nodes: usize) -> Option<f64> {
        let (weights, features) = match &self.kind {
            KernelKind::RankOne { coeffs } => (vec![1.0], vec![coeffs.clone()]),
            KernelKind::FiniteRank { weights, features } => (weights.clone(), features.clone()),
            KernelKind::GaussianRbf { .. } => return None,
        };
        let (x, w) = self.base.quadrature(n_nodes);
        let mut s = 0.0;
        for (l, (ml, fl)) in weights.iter().zip(&features).enumerate() {
            for (mm, fm) in weights.iter().zip(&features).skip(l) {
                let g: f64 = x.iter().zip(&w).map(|(xa, wa)| wa * poly(fl, *xa) * poly(fm, *xa)).sum();
                let t = ml * mm * g * g * self.scale * self.scale;
                s += if std::ptr::eq(fl, fm) { t } else { 2.0 * t };
            }
        }
        Some(s)
    }
}

/// Rank-`L` Mercer expansion computed by the Nyström method.
#[derive(Debug, Clone)]
pub struct MercerTruncation {
    pub kernel: KernelSpec,
    pub rank: usize,
    /// Leading eigenvalues, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Every eigenvalue of the weighted quadrature matrix, nonincreasing.
    pub spectrum: Vec<f64>,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `f_ℓ(x_a)`, one column per retained eigenfunction.
    pub node_features: DMatrix<f64>,
    /// `sup |κ − κ^L|` on the evaluation grid.
    pub residual: f64,
    /// `Σ_{ℓ>L} μ_ℓ`.
    pub tail_sum: f64,
    /// `∫(κ − κ^L)(x,x) ρ(dx)` on an independent finer rule.
    pub trace_residual: f64,
    /// Requested rank when rank deficiency forced an early stop.
    pub requested_rank: usize,
}

/// Nyström truncation on `n_nodes` Gauss–Legendre nodes (or the atoms of a
/// discrete base measure). Stops early when `μ_L < 1e-12`.
pub fn mercer_truncate(kernel: &KernelSpec, rank: usize, n_nodes: usize) -> Result<MercerTruncation> {
    kernel.validate()?;
    if rank == 0 {
        return Err(invalid("rank must be at least 1"));
    }
    if !kernel.base.is_discrete() && n_nodes < 4 * rank {
        return Err(invalid(format!("need n_nodes >= 4L, got {n_nodes} for L = {rank}")));
    }
    let (x, w) = kernel.base.quadrature(n_nodes);
    let n = x.len();
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let m = DMatrix::from_fn(n, n, |a, b| sw[a] * kernel.eval(x[a], x[b]) * sw[b]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let spectrum: Vec<f64> = order
        .iter()
        .map(|&i| {
            let v = eig.eigenvalues[i];
            if v < 0.0 && v >= -1e-10 {
                0.0
            } else {
                v
            }
        })
        .collect();
    let kept = spectrum.iter().take(rank).take_while(|&&v| v >= RANK_FLOOR).count();
    if kept == 0 {
        return Err(invalid("kernel has no eigenvalue above the rank floor"));
    }
    if kept < rank {
        log::warn!("rank deficiency: keeping {kept} of {rank} eigenfunctions");
    }
    let mut feats = DMatrix::zeros(n, kept);
    for (l, &i) in order.iter().take(kept).enumerate() {
        let v = eig.eigenvectors.column(i);
        // Sign convention: the first moment E[x^m f] that does not vanish is positive.
        let pivot = (0..8)
            .map(|p| (0..n).map(|a| w[a] * x[a].powi(p) * v[a] / sw[a]).sum::<f64>())
            .find(|m| m.abs() > 1e-8)
            .unwrap_or(1.0);
        let s = if pivot < 0.0 { -1.0 } else { 1.0 };
        for a in 0..n {
            feats[(a, l)] = s * v[a] / sw[a];
        }
    }
    let eigenvalues = spectrum[..kept].to_vec();
    let tail_sum: f64 = spectrum[kept..].iter().filter(|v| **v > 0.0).sum();
    let mut t = MercerTruncation {
        kernel: kernel.clone(),
        rank: kept,
        eigenvalues,
        spectrum,
        nodes: x,
        weights: w,
        node_features: feats,
        residual: 0.0,
        tail_sum,
        trace_residual: 0.0,
        requested_rank: rank,
    };
    t.refresh_diagnostics();
    Ok(t)
}

impl MercerTruncation {
    /// Nyström extension `f_ℓ(x) = μ_ℓ⁻¹ Σ_a w_a κ(x, x_a) f_ℓ(x_a)`.
    pub fn eigenfunctions(&self, x: f64) -> Vec<f64> {
        let k: Vec<f64> = self.nodes.iter().zip(&self.weights).map(|(&xa, wa)| wa * self.kernel.eval(x, xa)).collect();
        (0..self.rank)
            .map(|l| k.iter().enumerate().map(|(a, v)| v * self.node_features[(a, l)]).sum::<f64>() / self.eigenvalues[l])
            .collect()
    }

    /// `u(x) = (√μ_ℓ f_ℓ(x))_ℓ`.
    pub fn features(&self, x: f64) -> Vec<f64> {
        self.eigenfunctions(x).iter().zip(&self.eigenvalues).map(|(f, m)| f * m.sqrt()).collect()
    }

    /// `u` at the quadrature nodes, one row per node.
    pub fn node_embedding(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nodes.len(), self.rank, |a, l| self.node_features[(a, l)] * self.eigenvalues[l].sqrt())
    }

    /// Restriction to the leading `l` eigenfunctions.
    pub fn truncate(&self, l: usize) -> Result<MercerTruncation> {
        if l == 0 || l > self.rank {
            return Err(invalid(format!("rank {l} outside 1..={}", self.rank)));
        }
        let mut t = self.clone();
        t.rank = l;
        t.eigenvalues.truncate(l);
        t.node_features = self.node_features.columns(0, l).into_owned();
        t.tail_sum = self.spectrum[l..].iter().filter(|v| **v > 0.0).sum();
        t.refresh_diagnostics();
        Ok(t)
    }

    fn refresh_diagnostics(&mut self) {
        let grid = self.kernel.base.grid();
        let gf: Vec<Vec<f64>> = grid.iter().map(|&g| self.eigenfunctions(g)).collect();
        let mut res: f64 = 0.0;
        for (a, fa) in grid.iter().zip(&gf) {
            for (b, fb) in grid.iter().zip(&gf) {
                res = res.max((self.kernel.eval(*a, *b) - self.expansion(fa, fb)).abs());
            }
        }
        self.residual = res;
        let (xf, wf) = self.kernel.base.quadrature(2 * self.nodes.len() + 1);
        self.trace_residual = xf
            .iter()
            .zip(&wf)
            .map(|(&xa, wa)| {
                let f = self.eigenfunctions(xa);
                wa * (self.kernel.eval(xa, xa) - self.expansion(&f, &f))
            })
            .sum();
    }

    fn expansion(&self, fa: &[f64], fb: &[f64]) -> f64 {
        self.eigenvalues.iter().zip(fa).zip(fb).map(|((m, u), v)| m * u * v).sum()
    }

    /// Max deviation of `⟨f_ℓ, f_m⟩_ρ` from `δ_ℓm` on the quadrature.
    pub fn orthonormality_error(&self) -> f64 {
        let mut e: f64 = 0.0;
        for l in 0..self.rank {
            for m in 0..self.rank {
                let g: f64 = (0..self.nodes.len()).map(|a| self.weights[a] * self.node_features[(a, l)] * self.node_features[(a, m)]).sum();
                e = e.max((g - if l == m { 1.0 } else { 0.0 }).abs());
            }
        }
        e
    }
}
