use rand::Rng;
use serde::Serialize;

use super::{enumerate, haar_sample, RepChannel};
use crate::error::{invalid, Result};
use crate::rng::stream;
use crate::stats::accumulate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RepType {
    RealType,
    ComplexType,
    QuaternionicType,
    Indeterminate,
}

impl RepType {
    pub fn rho(&self) -> Option<f64> {
        match self {
            RepType::RealType => Some(1.0),
            RepType::ComplexType => Some(2.0),
            RepType::QuaternionicType => Some(4.0),
            RepType::Indeterminate => None,
        }
    }
}

/// Frobenius–Schur type of a real-irreducible channel, read off from
/// `ρ = E[(Tr φ(g))²] ∈ {1, 2, 4}`.
#[derive(Debug, Clone, Serialize)]
pub struct RepClassification {
    pub rho: f64,
    pub rho_stderr: f64,
    pub type_tag: RepType,
    /// `k/ρ` with ρ the type value; falls back to the raw estimate when the
    /// type is indeterminate.
    pub threshold: f64,
    /// `k/ρ̂` with the raw estimate.
    pub threshold_estimate: f64,
    pub exact: bool,
}

impl RepClassification {
    /// Effective SNR `λρ/k` for the channel's SNR.
    pub fn effective_snr(&self, channel: &RepChannel) -> Option<f64> {
        self.type_tag.rho().map(|r| channel.snr * r / channel.dim() as f64)
    }
}

const EXACT_TOL: f64 = 1e-9;

/// Estimate ρ by Haar averaging. Finite groups no larger than `n_samples`
/// are averaged exactly.
pub fn classify<R: Rng + ?Sized>(channel: &RepChannel, n_samples: usize, rng: &mut R) -> Result<RepClassification> {
    if n_samples < 10_000 {
        return Err(invalid(format!("classify needs at least 10^4 samples, got {n_samples}")));
    }
    let k = channel.dim();
    let mut buf = vec![0.0; k * k];
    let trace = |buf: &[f64]| (0..k).map(|i| buf[i * (k + 1)]).sum::<f64>();

    let (rho, se, exact) = match channel.group.order() {
        Some(order) if order <= n_samples as u64 => {
            let elems = enumerate(&channel.group)?;
            let mut s = 0.0;
            for g in &elems {
                channel.write(g, &mut buf);
                s += trace(&buf).powi(2);
            }
            (s / elems.len() as f64, 0.0, true)
        }
        _ => {
            let seed = rng.next_u64();
            let m = accumulate(n_samples, 1, |i, out| {
                let mut r = stream(seed, i as u64);
                let g = haar_sample(&channel.group, &mut r);
                let mut b = vec![0.0; k * k];
                channel.write(&g, &mut b);
                out[0] = trace(&b).powi(2);
            });
            (m.mean(0), m.stderr(0), false)
        }
    };

    let tol = if exact { EXACT_TOL } else { 3.0 * se };
    let hits: Vec<RepType> = [RepType::RealType, RepType::ComplexType, RepType::QuaternionicType]
        .into_iter()
        .filter(|t| (rho - t.rho().unwrap()).abs() <= tol)
        .collect();
    let type_tag = if hits.len() == 1 { hits[0] } else { RepType::Indeterminate };
    let threshold_estimate = k as f64 / rho;
    let threshold = type_tag.rho().map_or(threshold_estimate, |r| k as f64 / r);
    Ok(RepClassification { rho, rho_stderr: se, type_tag, threshold, threshold_estimate, exact })
}
