use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{solve_with, FixedPointOptions, ReplicaSolution};
use crate::error::{invalid, Result};
use crate::group::RepChannel;
use crate::linalg::op_norm;
use crate::rng::{derive, stream, tag};
use crate::single_letter::{gaussian_block, EstimatorConfig, Overlap, SingleLetter};

/// Fixed points sharing one orbit signature.
#[derive(Debug, Clone)]
pub struct FixedPointClass {
    pub signature: Vec<Vec<f64>>,
    pub representative: ReplicaSolution,
    /// Indices of the starts that landed here.
    pub starts: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LandscapeReport {
    /// Largest potential among converged solutions (all solutions if none converged).
    pub best: ReplicaSolution,
    pub classes: Vec<FixedPointClass>,
    pub starts: Vec<Overlap>,
    pub solutions: Vec<ReplicaSolution>,
}

/// Starts `0`, `I`, then random PSD matrices with operator norm at most one.
pub fn default_starts(channels: &[RepChannel], n_starts: usize, seed: u64) -> Vec<Overlap> {
    (0..n_starts)
        .map(|s| match s {
            0 => Overlap::zeros(channels),
            1 => Overlap::scalar(channels, 1.0),
            _ => {
                let mut rng = stream(derive(seed, tag::STARTS), s as u64);
                let blocks = channels
                    .iter()
                    .map(|c| {
                        let g = gaussian_block(c.dim(), &mut rng);
                        let a: DMatrix<f64> = &g * g.transpose();
                        let n = op_norm(&a).max(1e-12);
                        a / n
                    })
                    .collect();
                Overlap { blocks }
            }
        })
        .collect()
}

/// Multi-start search over fixed points of the state-evolution map.
pub fn landscape_scan(
    channels: &[RepChannel],
    n_starts: usize,
    opts: &FixedPointOptions,
    cfg: &EstimatorConfig,
) -> Result<LandscapeReport> {
    if n_starts == 0 {
        return Err(invalid("n_starts must be at least 1"));
    }
    landscape_scan_from(channels, default_starts(channels, n_starts, cfg.seed), opts, cfg)
}

pub fn landscape_scan_from(
    channels: &[RepChannel],
    starts: Vec<Overlap>,
    opts: &FixedPointOptions,
    cfg: &EstimatorConfig,
) -> Result<LandscapeReport> {
    if starts.is_empty() {
        return Err(invalid("at least one start is required"));
    }
    let sl = SingleLetter::new(channels, cfg)?;
    let solutions = starts.par_iter().map(|q0| solve_with(&sl, q0, opts)).collect::<Result<Vec<_>>>()?;

    let mut classes: Vec<FixedPointClass> = Vec::new();
    for (i, s) in solutions.iter().enumerate() {
        let sig = s.q_star.signature();
        let found = classes.iter_mut().find(|c| {
            let tol = 10.0 * c.representative.tol.max(s.tol);
            signature_distance(&c.signature, &sig) <= tol
        });
        match found {
            Some(c) => c.starts.push(i),
            None => classes.push(FixedPointClass { signature: sig, representative: s.clone(), starts: vec![i] }),
        }
    }

    let pool: Vec<&ReplicaSolution> = if solutions.iter().any(|s| s.converged) {
        solutions.iter().filter(|s| s.converged).collect()
    } else {
        solutions.iter().collect()
    };
    let best = pool
        .into_iter()
        .fold(None::<&ReplicaSolution>, |acc, s| match acc {
            Some(b) if b.psi_value >= s.psi_value => Some(b),
            _ => Some(s),
        })
        .expect("non-empty")
        .clone();
    Ok(LandscapeReport { best, classes, starts, solutions })
}

fn signature_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}
