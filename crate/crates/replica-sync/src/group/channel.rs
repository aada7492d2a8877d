use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{GroupElement, GroupSpec};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RepKind {
    /// `θ ↦ R(ℓθ)` on SO(2).
    SO2Harmonic(u32),
    /// Defining representation of SO(k).
    SOkStandard,
    /// `h^j ↦ R(2πℓj/k)` on Cyclic(k), `1 ≤ ℓ ≤ (k−1)/2`.
    CyclicPlane(usize),
    /// Permutation action of Symmetric(k) on the complement of the all-ones vector.
    SymmetricStandard,
    /// One-dimensional `±1` representation (Z2, even cyclic groups, permutation sign).
    Sign,
}

/// A group together with one orthogonal representation and its SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepChannel {
    pub group: GroupSpec,
    pub rep: RepKind,
    pub snr: f64,
}

impl RepChannel {
    pub fn new(group: GroupSpec, rep: RepKind, snr: f64) -> Result<Self> {
        group.validate()?;
        if !(snr.is_finite() && snr > 0.0) {
            return Err(invalid(format!("snr must be positive and finite, got {snr}")));
        }
        let ok = match (group, rep) {
            (GroupSpec::SO2, RepKind::SO2Harmonic(l)) => l >= 1,
            (GroupSpec::SOk(_), RepKind::SOkStandard) => true,
            (GroupSpec::Cyclic(k), RepKind::CyclicPlane(l)) => l >= 1 && 2 * l < k,
            (GroupSpec::Cyclic(k), RepKind::Sign) => k % 2 == 0,
            (GroupSpec::Z2, RepKind::Sign) => true,
            (GroupSpec::Symmetric(k), RepKind::SymmetricStandard) => k >= 3,
            (GroupSpec::Symmetric(_), RepKind::Sign) => true,
            _ => false,
        };
        if !ok {
            return Err(invalid(format!("representation {rep:?} is not available on {group}")));
        }
        Ok(Self { group, rep, snr })
    }

    pub fn so2(harmonic: u32, snr: f64) -> Result<Self> {
        Self::new(GroupSpec::SO2, RepKind::SO2Harmonic(harmonic), snr)
    }

    pub fn sok(k: usize, snr: f64) -> Result<Self> {
        Self::new(GroupSpec::SOk(k), RepKind::SOkStandard, snr)
    }

    pub fn cyclic_plane(k: usize, l: usize, snr: f64) -> Result<Self> {
        Self::new(GroupSpec::Cyclic(k), RepKind::CyclicPlane(l), snr)
    }

    pub fn symmetric(k: usize, snr: f64) -> Result<Self> {
        Self::new(GroupSpec::Symmetric(k), RepKind::SymmetricStandard, snr)
    }

    pub fn z2(snr: f64) -> Result<Self> {
        Self::new(GroupSpec::Z2, RepKind::Sign, snr)
    }

    pub fn with_snr(&self, snr: f64) -> Result<Self> {
        Self::new(self.group, self.rep, snr)
    }

    pub fn dim(&self) -> usize {
        match (self.rep, self.group) {
            (RepKind::SO2Harmonic(_), _) | (RepKind::CyclicPlane(_), _) => 2,
            (RepKind::SOkStandard, GroupSpec::SOk(k)) => k,
            (RepKind::SymmetricStandard, GroupSpec::Symmetric(k)) => k - 1,
            (RepKind::Sign, _) => 1,
            _ => unreachable!("validated at construction"),
        }
    }

    /// Write `φ(g)` column-major into `out` (length `dim²`).
    pub(crate) fn write(&self, g: &GroupElement, out: &mut [f64]) {
        match (self.rep, g) {
            (RepKind::SO2Harmonic(l), GroupElement::Angle(t)) => rotation2(l as f64 * t, out),
            (RepKind::CyclicPlane(l), GroupElement::Residue(j)) => {
                let GroupSpec::Cyclic(k) = self.group else { unreachable!() };
                rotation2(TAU * ((l * j) % k) as f64 / k as f64, out)
            }
            (RepKind::SOkStandard, GroupElement::Rotation(m)) => out.copy_from_slice(m.as_slice()),
            (RepKind::Sign, GroupElement::Residue(j)) => out[0] = if j % 2 == 0 { 1.0 } else { -1.0 },
            (RepKind::Sign, GroupElement::Permutation(p)) => out[0] = permutation_sign(p),
            (RepKind::SymmetricStandard, GroupElement::Permutation(p)) => {
                let k = p.len();
                let d = k - 1;
                // φ(σ)_{ab} = Σ_i h_a[σ(i)] h_b[i] with the Helmert rows h.
                for b in 0..d {
                    for a in 0..d {
                        let mut s = 0.0;
                        for (i, &pi) in p.iter().enumerate() {
                            s += helmert(a, pi) * helmert(b, i);
                        }
                        out[a + b * d] = s;
                    }
                }
            }
            _ => unreachable!("element family checked by caller"),
        }
    }
}

fn rotation2(t: f64, out: &mut [f64]) {
    let (s, c) = t.sin_cos();
    out[0] = c;
    out[1] = s;
    out[2] = -s;
    out[3] = c;
}

/// Entry `i` of the `a`-th Helmert row: `(1,…,1,−(a+1),0,…)/√((a+1)(a+2))`.
fn helmert(a: usize, i: usize) -> f64 {
    let m = (a + 1) as f64;
    let norm = (m * (m + 1.0)).sqrt();
    if i <= a {
        1.0 / norm
    } else if i == a + 1 {
        -m / norm
    } else {
        0.0
    }
}

fn permutation_sign(p: &[usize]) -> f64 {
    let mut seen = vec![false; p.len()];
    let mut sign = 1.0;
    for s in 0..p.len() {
        if seen[s] {
            continue;
        }
        let mut len = 0;
        let mut i = s;
        while !seen[i] {
            seen[i] = true;
            i = p[i];
            len += 1;
        }
        if len % 2 == 0 {
            sign = -sign;
        }
    }
    sign
}

/// Evaluate the orthogonal matrix `φ(g)` of a channel.
pub fn represent(channel: &RepChannel, g: &GroupElement) -> Result<DMatrix<f64>> {
    if !channel.group.contains(g) {
        return Err(invalid(format!("element {g:?} does not belong to {}", channel.group)));
    }
    let k = channel.dim();
    let mut buf = vec![0.0; k * k];
    channel.write(g, &mut buf);
    Ok(DMatrix::from_column_slice(k, k, &buf))
}

/// Offsets of each channel's `k²` block inside a flat feature vector.
#[derive(Debug, Clone)]
pub struct ChannelLayout {
    pub channels: Vec<RepChannel>,
    pub dims: Vec<usize>,
    pub offsets: Vec<usize>,
    pub width: usize,
}

impl ChannelLayout {
    pub fn new(channels: &[RepChannel]) -> Result<Self> {
        let first = channels.first().ok_or_else(|| invalid("at least one channel is required"))?;
        if let Some(c) = channels.iter().find(|c| c.group != first.group) {
            return Err(invalid(format!("channels mix groups {} and {}", first.group, c.group)));
        }
        let dims: Vec<usize> = channels.iter().map(RepChannel::dim).collect();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut width = 0;
        for d in &dims {
            offsets.push(width);
            width += d * d;
        }
        Ok(Self { channels: channels.to_vec(), dims, offsets, width })
    }

    pub fn group(&self) -> GroupSpec {
        self.channels[0].group
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Flattened `(φ_1(g), …, φ_L(g))`.
    pub fn features(&self, g: &GroupElement, out: &mut [f64]) {
        for (c, &o) in self.channels.iter().zip(&self.offsets) {
            let k = c.dim();
            c.write(g, &mut out[o..o + k * k]);
        }
    }

    pub fn block<'a>(&self, l: usize, flat: &'a [f64]) -> &'a [f64] {
        let o = self.offsets[l];
        &flat[o..o + self.dims[l] * self.dims[l]]
    }

    pub fn block_matrix(&self, l: usize, flat: &[f64]) -> DMatrix<f64> {
        let k = self.dims[l];
        DMatrix::from_column_slice(k, k, self.block(l, flat))
    }
}

impl std::fmt::Display for RepKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RepKind::SO2Harmonic(h) => write!(f, "harmonic{h}"),
            RepKind::SOkStandard | RepKind::SymmetricStandard => write!(f, "standard"),
            RepKind::CyclicPlane(l) => write!(f, "plane{l}"),
            RepKind::Sign => write!(f, "sign"),
        }
    }
}

impl std::fmt::Display for RepChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.group, self.rep)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transposition_is_traceless_involution() {
        let c = RepChannel::symmetric(3, 1.0).unwrap();
        let m = represent(&c, &GroupElement::Permutation(vec![1, 0, 2])).unwrap();
        assert!(m.trace().abs() < 1e-14);
        assert!((&m * &m - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn cyclic_plane_generator() {
        let c = RepChannel::cyclic_plane(5, 1, 1.0).unwrap();
        let m = represent(&c, &GroupElement::Residue(1)).unwrap();
        let t = TAU / 5.0;
        assert!((m[(0, 0)] - t.cos()).abs() < 1e-15);
        assert!((m[(1, 0)] - t.sin()).abs() < 1e-15);
    }

    #[test]
    fn rejects_mismatched_element() {
        let c = RepChannel::so2(1, 1.0).unwrap();
        assert!(represent(&c, &GroupElement::Residue(0)).is_err());
    }

    #[test]
    fn sign_of_permutations() {
        assert_eq!(permutation_sign(&[1, 0, 2]), -1.0);
        assert_eq!(permutation_sign(&[1, 2, 0]), 1.0);
    }
}
