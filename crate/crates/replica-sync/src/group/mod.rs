//! Compact group families, Haar sampling and representation channels.

mod canonical;
mod channel;
mod classify;

pub use canonical::{canonicalize, canonicalize_with, ChannelSpec, MergeRule};
pub use channel::{represent, ChannelLayout, RepChannel, RepKind};
pub use classify::{classify, RepClassification, RepType};

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest finite group that `enumerate` will list.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

/// Tolerance for comparing elements of continuous groups.
pub const ELEMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupSpec {
    SO2,
    SOk(usize),
    Cyclic(usize),
    Symmetric(usize),
    Z2,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupElement {
    /// Rotation angle in `[0, 2π)`.
    Angle(f64),
    /// Special orthogonal matrix.
    Rotation(DMatrix<f64>),
    /// Residue `j` of the generator power `h^j`; also used for Z2 (`0 ↔ +1`, `1 ↔ −1`).
    Residue(usize),
    /// Permutation in one-line notation, `σ(i) = p[i]`.
    Permutation(Vec<usize>),
}

impl std::fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GroupSpec::SO2 => write!(f, "SO(2)"),
            GroupSpec::SOk(k) => write!(f, "SO({k})"),
            GroupSpec::Cyclic(k) => write!(f, "Cyclic({k})"),
            GroupSpec::Symmetric(k) => write!(f, "Symmetric({k})"),
            GroupSpec::Z2 => write!(f, "Z2"),
        }
    }
}

impl GroupSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GroupSpec::SOk(k) if k < 2 => Err(invalid(format!("SO(k) needs k >= 2, got {k}"))),
            GroupSpec::Cyclic(k) if k < 2 => Err(invalid(format!("Cyclic(k) needs k >= 2, got {k}"))),
            GroupSpec::Symmetric(k) if !(2..=20).contains(&k) => {
                Err(invalid(format!("Symmetric(k) needs 2 <= k <= 20, got {k}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, GroupSpec::Cyclic(_) | GroupSpec::Symmetric(_) | GroupSpec::Z2)
    }

    pub fn is_abelian(&self) -> bool {
        match *self {
            GroupSpec::SO2 | GroupSpec::Cyclic(_) | GroupSpec::Z2 => true,
            GroupSpec::SOk(k) => k == 2,
            GroupSpec::Symmetric(k) => k == 2,
        }
    }

    /// Group order, `None` for continuous families.
    pub fn order(&self) -> Option<u64> {
        match *self {
            GroupSpec::Cyclic(k) => Some(k as u64),
            GroupSpec::Z2 => Some(2),
            GroupSpec::Symmetric(k) => Some((1..=k as u64).product()),
            _ => None,
        }
    }

    pub fn identity(&self) -> GroupElement {
        match *self {
            GroupSpec::SO2 => GroupElement::Angle(0.0),
            GroupSpec::SOk(k) => GroupElement::Rotation(DMatrix::identity(k, k)),
            GroupSpec::Cyclic(_) | GroupSpec::Z2 => GroupElement::Residue(0),
            GroupSpec::Symmetric(k) => GroupElement::Permutation((0..k).collect()),
        }
    }

    /// Check that `g` is an element of this group.
    pub fn contains(&self, g: &GroupElement) -> bool {
        match (self, g) {
            (GroupSpec::SO2, GroupElement::Angle(t)) => t.is_finite(),
            (GroupSpec::SOk(k), GroupElement::Rotation(m)) => m.nrows() == *k && m.ncols() == *k,
            (GroupSpec::Cyclic(k), GroupElement::Residue(j)) => j < k,
            (GroupSpec::Z2, GroupElement::Residue(j)) => *j < 2,
            (GroupSpec::Symmetric(k), GroupElement::Permutation(p)) => p.len() == *k && is_permutation(p),
            _ => false,
        }
    }

    pub fn multiply(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.check(a)?;
        self.check(b)?;
        Ok(match (self, a, b) {
            (GroupSpec::SO2, GroupElement::Angle(x), GroupElement::Angle(y)) => GroupElement::Angle(wrap_angle(x + y)),
            (GroupSpec::SOk(_), GroupElement::Rotation(x), GroupElement::Rotation(y)) => GroupElement::Rotation(x * y),
            (GroupSpec::Cyclic(k), GroupElement::Residue(x), GroupElement::Residue(y)) => GroupElement::Residue((x + y) % k),
            (GroupSpec::Z2, GroupElement::Residue(x), GroupElement::Residue(y)) => GroupElement::Residue((x + y) % 2),
            (GroupSpec::Symmetric(_), GroupElement::Permutation(x), GroupElement::Permutation(y)) => {
                GroupElement::Permutation(y.iter().map(|&i| x[i]).collect())
            }
            _ => unreachable!("checked above"),
        })
    }

    pub fn inverse(&self, a: &GroupElement) -> Result<GroupElement> {
        self.check(a)?;
        Ok(match (self, a) {
            (GroupSpec::SO2, GroupElement::Angle(x)) => GroupElement::Angle(wrap_angle(-x)),
            (GroupSpec::SOk(_), GroupElement::Rotation(x)) => GroupElement::Rotation(x.transpose()),
            (GroupSpec::Cyclic(k), GroupElement::Residue(x)) => GroupElement::Residue((k - x) % k),
            (GroupSpec::Z2, GroupElement::Residue(x)) => GroupElement::Residue(*x),
            (GroupSpec::Symmetric(k), GroupElement::Permutation(p)) => {
                let mut inv = vec![0; *k];
                for (i, &pi) in p.iter().enumerate() {
                    inv[pi] = i;
                }
                GroupElement::Permutation(inv)
            }
            _ => unreachable!("checked above"),
        })
    }

    /// Element equality, with tolerance on the canonical parameter for
    /// continuous groups.
    pub fn same_element(&self, a: &GroupElement, b: &GroupElement) -> bool {
        match (a, b) {
            (GroupElement::Angle(x), GroupElement::Angle(y)) => {
                let d = wrap_angle(x - y);
                d.min(TAU - d) <= ELEMENT_TOL
            }
            (GroupElement::Rotation(x), GroupElement::Rotation(y)) => (x - y).amax() <= ELEMENT_TOL,
            _ => a == b,
        }
    }

    fn check(&self, g: &GroupElement) -> Result<()> {
        if self.contains(g) {
            Ok(())
        } else {
            Err(invalid(format!("element {g:?} does not belong to {self}")))
        }
    }
}

fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter().all(|&i| i < p.len() && !std::mem::replace(&mut seen[i], true))
}

pub(crate) fn wrap_angle(t: f64) -> f64 {
    let r = t.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Draw an element from the Haar measure.
///
/// For SO(k) this is the QR construction: Gaussian matrix, `Q` corrected by
/// the signs of `diag(R)`, then the first column negated if `det = −1`.
pub fn haar_sample<R: Rng + ?Sized>(group: &GroupSpec, rng: &mut R) -> GroupElement {
    match *group {
        GroupSpec::SO2 => GroupElement::Angle(rng.gen::<f64>() * TAU),
        GroupSpec::SOk(k) => GroupElement::Rotation(haar_rotation(k, rng)),
        GroupSpec::Cyclic(k) => GroupElement::Residue(rng.gen_range(0..k)),
        GroupSpec::Z2 => GroupElement::Residue(rng.gen_range(0..2)),
        GroupSpec::Symmetric(k) => {
            let mut p: Vec<usize> = (0..k).collect();
            for i in (1..k).rev() {
                p.swap(i, rng.gen_range(0..=i));
            }
            GroupElement::Permutation(p)
        }
    }
}

pub(crate) fn haar_rotation<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::<f64>::from_fn(k, k, |_, _| rng.sample(StandardNormal));
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

/// All elements of a finite group in a fixed order (residues ascending,
/// permutations lexicographic).
pub fn enumerate(group: &GroupSpec) -> Result<Vec<GroupElement>> {
    group.validate()?;
    let order = group.order().ok_or_else(|| Error::NotEnumerable(group.to_string()))?;
    if order > ENUMERATION_LIMIT {
        return Err(Error::BudgetExceeded { size: order as f64, limit: ENUMERATION_LIMIT as f64 });
    }
    Ok(match *group {
        GroupSpec::Cyclic(k) => (0..k).map(GroupElement::Residue).collect(),
        GroupSpec::Z2 => vec![GroupElement::Residue(0), GroupElement::Residue(1)],
        GroupSpec::Symmetric(k) => {
            let mut out = Vec::with_capacity(order as usize);
            let mut p: Vec<usize> = (0..k).collect();
            loop {
                out.push(GroupElement::Permutation(p.clone()));
                if !next_permutation(&mut p) {
                    break;
                }
            }
            out
        }
        _ => unreachable!("continuous groups have no order"),
    })
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}
