use serde::{Deserialize, Serialize};

use super::{GroupSpec, RepChannel, RepKind};
use crate::error::{invalid, Error, Result};

/// Channel constructions accepted by [`canonicalize`]. Besides irreducible
/// channels, the catalog has a few reducible actions that split into
/// known irreducible pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChannelSpec {
    Irreducible(RepChannel),
    /// Cyclic(k) rotating coordinates of the complement of the all-ones vector in ℝ^k.
    CyclicActionOnOrthogonalComplement { k: usize, snr: f64 },
    /// Symmetric(k) permuting coordinates of ℝ^k.
    PermutationAction { k: usize, snr: f64 },
    /// Trivial representation of the given dimension.
    Trivial { group: GroupSpec, dim: usize, snr: f64 },
    /// A plane of Cyclic(k) at any harmonic `ℓ`, reduced modulo the conjugate pairing.
    CyclicPlaneAny { k: usize, harmonic: usize, snr: f64 },
}

/// How two observations of the same irreducible channel are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MergeRule {
    /// `λ_new = λ + λ′`: the SNR-weighted sum `(√λ y + √λ′ y′)/√(λ+λ′)` is
    /// sufficient for any pair of SNRs.
    #[default]
    SufficientStatistic,
    /// `√λ_new = (√λ + √λ′)/√2`: the equal-weight average `(y + y′)/√2`.
    /// Coincides with the sufficient rule when `λ = λ′`.
    EqualWeight,
}

impl MergeRule {
    pub fn combine(&self, a: f64, b: f64) -> f64 {
        match self {
            MergeRule::SufficientStatistic => a + b,
            MergeRule::EqualWeight => ((a.sqrt() + b.sqrt()) / 2f64.sqrt()).powi(2),
        }
    }
}

/// Reduce to distinct, non-trivial, real-irreducible channels, merging
/// isomorphic duplicates with [`MergeRule::SufficientStatistic`].
pub fn canonicalize(channels: &[ChannelSpec]) -> Result<Vec<RepChannel>> {
    canonicalize_with(channels, MergeRule::default())
}

pub fn canonicalize_with(channels: &[ChannelSpec], rule: MergeRule) -> Result<Vec<RepChannel>> {
    let mut pieces = Vec::new();
    for spec in channels {
        split(spec, &mut pieces)?;
    }
    if let Some(first) = pieces.first() {
        if let Some(other) = pieces.iter().find(|c| c.group != first.group) {
            return Err(invalid(format!("channels mix groups {} and {}", first.group, other.group)));
        }
    }
    let mut out: Vec<RepChannel> = Vec::new();
    for p in pieces {
        match out.iter_mut().find(|c| c.rep == p.rep) {
            Some(c) => c.snr = rule.combine(c.snr, p.snr),
            None => out.push(p),
        }
    }
    Ok(out)
}

fn split(spec: &ChannelSpec, out: &mut Vec<RepChannel>) -> Result<()> {
    match *spec {
        ChannelSpec::Irreducible(ref c) => out.push(RepChannel::new(c.group, c.rep, c.snr)?),
        ChannelSpec::CyclicActionOnOrthogonalComplement { k, snr } => {
            if k < 2 {
                return Err(invalid("cyclic action needs k >= 2"));
            }
            for l in 1..=(k - 1) / 2 {
                out.push(RepChannel::cyclic_plane(k, l, snr)?);
            }
            if k % 2 == 0 {
                out.push(RepChannel::new(GroupSpec::Cyclic(k), RepKind::Sign, snr)?);
            }
        }
        ChannelSpec::PermutationAction { k, snr } => {
            if k < 2 {
                return Err(Error::Unsupported(format!("permutation action of Symmetric({k})")));
            }
            if k == 2 {
                out.push(RepChannel::new(GroupSpec::Symmetric(2), RepKind::Sign, snr)?);
            } else {
                out.push(RepChannel::symmetric(k, snr)?);
            }
        }
        ChannelSpec::Trivial { group, dim, snr } => {
            group.validate()?;
            if dim == 0 || !(snr.is_finite() && snr > 0.0) {
                return Err(invalid("trivial channel needs dim >= 1 and positive snr"));
            }
        }
        ChannelSpec::CyclicPlaneAny { k, harmonic, snr } => {
            if k < 2 {
                return Err(invalid("cyclic plane needs k >= 2"));
            }
            let l = harmonic % k;
            let l = l.min(k - l);
            if l == 0 {
                return Ok(());
            }
            if 2 * l == k {
                // (−1)^j on both axes: two copies of the sign representation.
                let sign = RepChannel::new(GroupSpec::Cyclic(k), RepKind::Sign, snr)?;
                out.push(sign.clone());
                out.push(sign);
            } else {
                out.push(RepChannel::cyclic_plane(k, l, snr)?);
            }
        }
    }
    Ok(())
}
