//! Self-describing little-endian container for synchronization instances.
//!
//! Layout: magic `RSYNC001`, `n: u64`, `seed: u64`, group tag `u8` and
//! parameter `u64`, channel count `u32`, then per channel rep tag `u8`,
//! parameter `u64`, `snr: f64`, `dim: u32`. The payload holds the truth,
//! one `f64` block per site, followed by the observations, one row-major
//! `k × k` block per channel per pair.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::finite::SyncInstance;
use crate::group::{ChannelLayout, GroupElement, GroupSpec, RepChannel, RepKind};

pub const MAGIC: &[u8; 8] = b"RSYNC001";

fn group_code(g: &GroupSpec) -> (u8, u64) {
    match *g {
        GroupSpec::SO2 => (0, 0),
        GroupSpec::SOk(k) => (1, k as u64),
        GroupSpec::Cyclic(k) => (2, k as u64),
        GroupSpec::Symmetric(k) => (3, k as u64),
        GroupSpec::Z2 => (4, 0),
    }
}

fn group_from(tag: u8, p: u64) -> Result<GroupSpec> {
    let p = p as usize;
    Ok(match tag {
        0 => GroupSpec::SO2,
        1 => GroupSpec::SOk(p),
        2 => GroupSpec::Cyclic(p),
        3 => GroupSpec::Symmetric(p),
        4 => GroupSpec::Z2,
        t => return Err(invalid(format!("unknown group tag {t}"))),
    })
}

fn rep_code(r: &RepKind) -> (u8, u64) {
    match *r {
        RepKind::SO2Harmonic(h) => (0, h as u64),
        RepKind::SOkStandard => (1, 0),
        RepKind::CyclicPlane(l) => (2, l as u64),
        RepKind::SymmetricStandard => (3, 0),
        RepKind::Sign => (4, 0),
    }
}

fn rep_from(tag: u8, p: u64) -> Result<RepKind> {
    Ok(match tag {
        0 => RepKind::SO2Harmonic(u32::try_from(p).map_err(|_| invalid("harmonic out of range"))?),
        1 => RepKind::SOkStandard,
        2 => RepKind::CyclicPlane(p as usize),
        3 => RepKind::SymmetricStandard,
        4 => RepKind::Sign,
        t => return Err(invalid(format!("unknown representation tag {t}"))),
    })
}

/// Number of `f64` values encoding one group element.
fn element_width(g: &GroupSpec) -> usize {
    match *g {
        GroupSpec::SOk(k) => k * k,
        GroupSpec::Symmetric(k) => k,
        _ => 1,
    }
}

fn encode_element(e: &GroupElement, out: &mut Vec<f64>) {
    match e {
        GroupElement::Angle(t) => out.push(*t),
        GroupElement::Residue(j) => out.push(*j as f64),
        GroupElement::Permutation(p) => out.extend(p.iter().map(|&v| v as f64)),
        GroupElement::Rotation(m) => {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    out.push(m[(r, c)]);
                }
            }
        }
    }
}

fn decode_element(g: &GroupSpec, v: &[f64]) -> Result<GroupElement> {
    let index = |x: f64| -> Result<usize> {
        if x >= 0.0 && x.fract() == 0.0 && x < 1e9 {
            Ok(x as usize)
        } else {
            Err(invalid(format!("expected an integer code, found {x}")))
        }
    };
    Ok(match *g {
        GroupSpec::SO2 => GroupElement::Angle(v[0]),
        GroupSpec::SOk(k) => GroupElement::Rotation(DMatrix::from_row_slice(k, k, v)),
        GroupSpec::Cyclic(_) | GroupSpec::Z2 => GroupElement::Residue(index(v[0])?),
        GroupSpec::Symmetric(_) => GroupElement::Permutation(v.iter().map(|&x| index(x)).collect::<Result<_>>()?),
    })
}

pub fn write_instance<W: Write>(inst: &SyncInstance, mut w: W) -> Result<()> {
    let group = inst.layout.group();
    w.write_all(MAGIC)?;
    w.write_u64::<LE>(inst.n as u64)?;
    w.write_u64::<LE>(inst.seed)?;
    let (gt, gp) = group_code(&group);
    w.write_u8(gt)?;
    w.write_u64::<LE>(gp)?;
    w.write_u32::<LE>(inst.layout.len() as u32)?;
    for (c, &k) in inst.channels().iter().zip(&inst.layout.dims) {
        let (rt, rp) = rep_code(&c.rep);
        w.write_u8(rt)?;
        w.write_u64::<LE>(rp)?;
        w.write_f64::<LE>(c.snr)?;
        w.write_u32::<LE>(k as u32)?;
    }
    let mut buf = Vec::new();
    for e in &inst.g_star {
        encode_element(e, &mut buf);
    }
    let width = inst.layout.width;
    for p in 0..inst.pairs() {
        let block = &inst.y[p * width..(p + 1) * width];
        for (&k, &o) in inst.layout.dims.iter().zip(&inst.layout.offsets) {
            for r in 0..k {
                for c in 0..k {
                    buf.push(block[o + r + c * k]);
                }
            }
        }
    }
    for v in buf {
        w.write_f64::<LE>(v)?;
    }
    Ok(())
}

pub fn read_instance<R: Read>(mut r: R) -> Result<SyncInstance> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(invalid("not an instance container (bad magic)"));
    }
    let n = r.read_u64::<LE>()? as usize;
    let seed = r.read_u64::<LE>()?;
    let group = group_from(r.read_u8()?, r.read_u64::<LE>()?)?;
    group.validate()?;
    let nc = r.read_u32::<LE>()? as usize;
    if nc == 0 || nc > 1 << 16 || n > 1 << 24 {
        return Err(invalid("implausible header"));
    }
    let mut channels = Vec::with_capacity(nc);
    for _ in 0..nc {
        let rep = rep_from(r.read_u8()?, r.read_u64::<LE>()?)?;
        let snr = r.read_f64::<LE>()?;
        let dim = r.read_u32::<LE>()? as usize;
        let c = RepChannel::new(group, rep, snr)?;
        if c.dim() != dim {
            return Err(invalid(format!("stored dimension {dim} does not match {}", c.dim())));
        }
        channels.push(c);
    }
    let layout = ChannelLayout::new(&channels)?;
    let ew = element_width(&group);
    let mut vals = vec![0.0; ew];
    let mut g_star = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_f64_into::<LE>(&mut vals)?;
        g_star.push(decode_element(&group, &vals)?);
    }
    let width = layout.width;
    let pairs = n * n.saturating_sub(1) / 2;
    let mut y = vec![0.0; pairs * width];
    let mut block = vec![0.0; width];
    for p in 0..pairs {
        r.read_f64_into::<LE>(&mut block)?;
        for (&k, &o) in layout.dims.iter().zip(&layout.offsets) {
            for row in 0..k {
                for col in 0..k {
                    y[p * width + o + row + col * k] = block[o + row * k + col];
                }
            }
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::InvalidInput("trailing bytes after payload".into()));
    }
    SyncInstance::from_observations(layout, g_star, y, seed)
}
