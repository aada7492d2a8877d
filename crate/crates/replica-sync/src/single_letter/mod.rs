//! The single-sample observation channel `y = √λ φ(g*) q^{1/2} + z`, its
//! posterior means and the state-evolution map.

mod bessel;
mod so2;

pub use bessel::{i0e, log_i0, so2_moment_ratio};
pub use so2::{rician_expectation, so2_f, so2_f_slope_at_zero, so2_mmse, so2_mutual_info, so2_psi_scalar};

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::group::{enumerate, haar_sample, ChannelLayout, GroupElement, GroupSpec, RepChannel};
use crate::linalg::{max_asymmetry, psd_clip, sym_sqrt, symmetrize};
use crate::quadrature::circle_trapezoid;
use crate::rng::{derive, stream, tag};
use crate::stats::{accumulate_with, Estimate, VecMoments};

/// Finite groups up to this order are averaged exactly.
pub const EXACT_GROUP_LIMIT: u64 = 10_000;

/// Monte Carlo and quadrature budgets shared by every expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Outer draws of `(g*, z)`.
    pub mc_samples: usize,
    /// Trapezoid nodes on SO(2); prior sample size for SO(k) and large finite groups.
    pub inner_resolution: usize,
    pub seed: u64,
    /// Pair each noise draw `z` with `−z`.
    pub antithetic: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { mc_samples: 4000, inner_resolution: 512, seed: 0x5eed, antithetic: false }
    }
}

impl EstimatorConfig {
    pub fn new(mc_samples: usize, inner_resolution: usize, seed: u64) -> Self {
        Self { mc_samples, inner_resolution, seed, antithetic: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mc_samples < 100 {
            return Err(invalid(format!("mc_samples must be >= 100, got {}", self.mc_samples)));
        }
        if self.inner_resolution < 64 {
            return Err(invalid(format!("inner_resolution must be >= 64, got {}", self.inner_resolution)));
        }
        Ok(())
    }
}

/// Block overlap `q = (q_1, …, q_L)` with symmetric PSD blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlap {
    pub blocks: Vec<DMatrix<f64>>,
}

impl Overlap {
    /// Validate symmetry and positivity; small negative eigenvalues are clipped.
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        for (l, b) in blocks.iter().enumerate() {
            if b.nrows() != b.ncols() {
                return Err(invalid(format!("overlap block {l} is not square")));
            }
            if max_asymmetry(b) > 1e-12 * b.amax().max(1.0) {
                return Err(invalid(format!("overlap block {l} is not symmetric")));
            }
        }
        Self::project(blocks)
    }

    /// Symmetrize and clip without the symmetry check.
    pub fn project(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let blocks = blocks.iter().map(psd_clip).collect::<Result<Vec<_>>>()?;
        Ok(Self { blocks })
    }

    pub fn zeros(channels: &[RepChannel]) -> Self {
        Self::scalar(channels, 0.0)
    }

    /// `q·I` in every block.
    pub fn scalar(channels: &[RepChannel], q: f64) -> Self {
        Self { blocks: channels.iter().map(|c| DMatrix::identity(c.dim(), c.dim()) * q).collect() }
    }

    pub fn from_scalars(channels: &[RepChannel], qs: &[f64]) -> Self {
        Self {
            blocks: channels.iter().zip(qs).map(|(c, &q)| DMatrix::identity(c.dim(), c.dim()) * q).collect(),
        }
    }

    pub fn check_against(&self, channels: &[RepChannel]) -> Result<()> {
        if self.blocks.len() != channels.len() {
            return Err(invalid(format!("overlap has {} blocks for {} channels", self.blocks.len(), channels.len())));
        }
        for (l, (b, c)) in self.blocks.iter().zip(channels).enumerate() {
            if b.nrows() != c.dim() {
                return Err(invalid(format!("overlap block {l} has size {} but channel dim is {}", b.nrows(), c.dim())));
            }
        }
        Ok(())
    }

    pub fn frobenius_norms(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.norm()).collect()
    }

    pub fn sqrt_blocks(&self) -> Vec<DMatrix<f64>> {
        self.blocks.iter().map(sym_sqrt).collect()
    }

    /// `φ_ℓ(g) q_ℓ φ_ℓ(g)ᵀ` in every block.
    pub fn conjugate(&self, channels: &[RepChannel], g: &GroupElement) -> Result<Self> {
        let blocks = self
            .blocks
            .iter()
            .zip(channels)
            .map(|(b, c)| {
                let r = crate::group::represent(c, g)?;
                Ok(symmetrize(&(&r * b * r.transpose())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { blocks })
    }

    /// Largest block-wise Frobenius distance.
    pub fn max_distance(&self, other: &Overlap) -> f64 {
        self.blocks.iter().zip(&other.blocks).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Sorted eigenvalues of each block; invariant under conjugation.
    pub fn signature(&self) -> Vec<Vec<f64>> {
        self.blocks.iter().map(crate::linalg::sym_eigenvalues).collect()
    }
}

/// One draw `(g*, z, y)` of the single-sample channel.
#[derive(Debug, Clone)]
pub struct SingleLetterDraw {
    pub g_star: GroupElement,
    pub z_blocks: Vec<DMatrix<f64>>,
    pub y_blocks: Vec<DMatrix<f64>>,
}

impl SingleLetterDraw {
    /// Build `y_ℓ = √λ_ℓ φ_ℓ(g*) q_ℓ^{1/2} + z_ℓ`.
    pub fn new(channels: &[RepChannel], q: &Overlap, g_star: GroupElement, z_blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        q.check_against(channels)?;
        let roots = q.sqrt_blocks();
        let y_blocks = channels
            .iter()
            .zip(&roots)
            .zip(&z_blocks)
            .map(|((c, r), z)| Ok(crate::group::represent(c, &g_star)? * r * c.snr.sqrt() + z))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { g_star, z_blocks, y_blocks })
    }

    pub fn sample<R: Rng + ?Sized>(channels: &[RepChannel], q: &Overlap, rng: &mut R) -> Result<Self> {
        let g = haar_sample(&channels[0].group, rng);
        let z = channels.iter().map(|c| gaussian_block(c.dim(), rng)).collect();
        Self::new(channels, q, g, z)
    }
}

pub(crate) fn gaussian_block<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |_, _| rng.sample(StandardNormal))
}

/// Discrete stand-in for the Haar measure: atoms with their features.
#[derive(Debug, Clone)]
pub(crate) struct PriorAtoms {
    pub elements: Vec<GroupElement>,
    pub features: Vec<f64>,
    /// True when the atoms reproduce Haar expectations exactly (enumeration)
    /// or to quadrature accuracy (SO(2) trapezoid).
    pub exact: bool,
}

impl PriorAtoms {
    pub fn build(layout: &ChannelLayout, cfg: &EstimatorConfig) -> Result<Self> {
        let group = layout.group();
        let (elements, exact) = match group {
            GroupSpec::SO2 => {
                let (t, _) = circle_trapezoid(cfg.inner_resolution);
                (t.into_iter().map(GroupElement::Angle).collect(), true)
            }
            g if g.order().is_some_and(|o| o <= EXACT_GROUP_LIMIT) => (enumerate(&g)?, true),
            GroupSpec::SOk(k) => (sign_symmetrized_rotations(k, cfg), false),
            g => {
                let mut rng = stream(derive(cfg.seed, tag::INNER), 0);
                ((0..cfg.inner_resolution).map(|_| haar_sample(&g, &mut rng)).collect(), false)
            }
        };
        let w = layout.width;
        let mut features = vec![0.0; elements.len() * w];
        for (g, row) in elements.iter().zip(features.chunks_mut(w)) {
            layout.features(g, row);
        }
        Ok(Self { elements, features, exact })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }
}

/// Haar rotations closed under right multiplication by even sign-diagonal
/// matrices, so the sample mean of `g` is exactly zero.
fn sign_symmetrized_rotations(k: usize, cfg: &EstimatorConfig) -> Vec<GroupElement> {
    let signs: Vec<Vec<f64>> = (0..1usize << k)
        .filter(|m| m.count_ones() % 2 == 0)
        .map(|m| (0..k).map(|i| if m >> i & 1 == 1 { -1.0 } else { 1.0 }).collect())
        .collect();
    let base = cfg.inner_resolution.div_ceil(signs.len()).max(1);
    let mut rng = stream(derive(cfg.seed, tag::INNER), 0);
    let mut out = Vec::with_capacity(base * signs.len());
    for _ in 0..base {
        let g = crate::group::haar_rotation(k, &mut rng);
        for s in &signs {
            let mut h = g.clone();
            for (j, &sj) in s.iter().enumerate() {
                if sj < 0.0 {
                    h.column_mut(j).neg_mut();
                }
            }
            out.push(GroupElement::Rotation(h));
        }
    }
    out
}

/// Field matrices derived from `q`.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    /// `λ_ℓ q_ℓ`, flattened.
    pub signal: Vec<f64>,
    /// `√λ_ℓ q_ℓ^{1/2}`, flattened.
    pub noise: Vec<f64>,
}

/// Per-sample scratch buffers.
pub(crate) struct Workspace {
    pub rng: ChaCha8Rng,
    pub star: Vec<f64>,
    pub z: Vec<f64>,
    pub b: Vec<f64>,
    pub mean: Vec<f64>,
    pub scratch: Vec<f64>,
}

impl Workspace {
    pub fn new(width: usize, atoms: usize, rng: ChaCha8Rng) -> Self {
        Self {
            rng,
            star: vec![0.0; width],
            z: vec![0.0; width],
            b: vec![0.0; width],
            mean: vec![0.0; width],
            scratch: Vec::with_capacity(atoms),
        }
    }
}

/// Single-letter channel bound to a channel list and estimator budget.
/// Building it once amortizes the prior atoms across many evaluations.
#[derive(Debug, Clone)]
pub struct SingleLetter {
    pub(crate) layout: ChannelLayout,
    pub(crate) atoms: PriorAtoms,
    pub(crate) cfg: EstimatorConfig,
}

/// Quantities gathered in one pass over the outer draws.
#[derive(Debug, Clone)]
pub struct ChannelStats {
    /// `E log E_g exp(⟨g, B⟩)`.
    pub log_partition: Estimate,
    /// `E⟨g_ℓ⟩ᵀ⟨g_ℓ⟩` per channel.
    pub second_moment: Vec<DMatrix<f64>>,
    pub second_moment_stderr: Vec<DMatrix<f64>>,
    /// `E φ_ℓ(g*)ᵀ⟨g_ℓ⟩` per channel.
    pub cross_moment: Vec<DMatrix<f64>>,
    /// Per channel: `E Tr φ(g*)ᵀ⟨g⟩ − E Tr ⟨g⟩ᵀ⟨g⟩` with its standard error.
    pub nishimori_gap: Vec<Estimate>,
    pub samples: usize,
}

impl ChannelStats {
    pub fn max_stderr(&self) -> f64 {
        self.second_moment_stderr.iter().map(|m| m.amax()).fold(0.0, f64::max)
    }
}

impl SingleLetter {
    pub fn new(channels: &[RepChannel], cfg: &EstimatorConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = ChannelLayout::new(channels)?;
        let atoms = PriorAtoms::build(&layout, cfg)?;
        Ok(Self { layout, atoms, cfg: cfg.clone() })
    }

    pub fn channels(&self) -> &[RepChannel] {
        &self.layout.channels
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// Flattened `B_ℓ = √λ_ℓ y_ℓ q_ℓ^{1/2}` for explicit observations.
    fn field_from_y(&self, roots: &[DMatrix<f64>], y: &[DMatrix<f64>], out: &mut [f64]) {
        for (l, c) in self.layout.channels.iter().enumerate() {
            let b = &y[l] * &roots[l] * c.snr.sqrt();
            let o = self.layout.offsets[l];
            out[o..o + b.len()].copy_from_slice(b.as_slice());
        }
    }

    /// Precompute the two matrices that map `(g*, z)` to the field.
    pub(crate) fn prepare(&self, q: &Overlap) -> Prepared {
        let w = self.layout.width;
        let mut signal = vec![0.0; w];
        let mut noise = vec![0.0; w];
        for (l, c) in self.layout.channels.iter().enumerate() {
            let r = sym_sqrt(&q.blocks[l]);
            let rr = &r * &r;
            let o = self.layout.offsets[l];
            let n = r.len();
            for (t, v) in rr.iter().enumerate() {
                signal[o + t] = c.snr * v;
            }
            for (t, v) in r.iter().enumerate() {
                noise[o + t] = c.snr.sqrt() * v;
            }
            debug_assert_eq!(n, self.layout.dims[l].pow(2));
        }
        Prepared { signal, noise }
    }

    /// `B_ℓ = λ_ℓ g*_ℓ q_ℓ + s·√λ_ℓ z_ℓ q_ℓ^{1/2}`, which equals `√λ_ℓ y_ℓ q_ℓ^{1/2}`.
    pub(crate) fn field(&self, p: &Prepared, star: &[f64], z: &[f64], sign: f64, out: &mut [f64]) {
        for (l, &k) in self.layout.dims.iter().enumerate() {
            let o = self.layout.offsets[l];
            let range = o..o + k * k;
            let (g, zb) = (&star[range.clone()], &z[range.clone()]);
            let (a, c) = (&p.signal[range.clone()], &p.noise[range.clone()]);
            let dst = &mut out[range];
            for j in 0..k {
                for i in 0..k {
                    let mut acc = 0.0;
                    for m in 0..k {
                        acc += g[i + m * k] * a[m + j * k] + sign * zb[i + m * k] * c[m + j * k];
                    }
                    dst[i + j * k] = acc;
                }
            }
        }
    }

    /// Log-partition and flattened posterior mean for a field `b`.
    pub(crate) fn posterior_flat(&self, b: &[f64], scratch: &mut Vec<f64>, mean: &mut [f64]) -> Result<f64> {
        let w = self.layout.width;
        let n = self.atoms.len();
        scratch.clear();
        scratch.extend(self.atoms.features.chunks(w).map(|f| f.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()));
        let m = scratch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::Numerical("non-finite posterior exponent".into()));
        }
        mean.iter_mut().for_each(|v| *v = 0.0);
        let mut z = 0.0;
        for (e, f) in scratch.iter().zip(self.atoms.features.chunks(w)) {
            let p = (e - m).exp();
            z += p;
            for (acc, x) in mean.iter_mut().zip(f) {
                *acc += p * x;
            }
        }
        if !(z > 0.0) {
            return Err(Error::Numerical("posterior normalization underflowed".into()));
        }
        mean.iter_mut().for_each(|v| *v /= z);
        Ok(m + (z / n as f64).ln())
    }

    /// `⟨g_ℓ⟩_q` for one draw.
    pub fn posterior_mean(&self, q: &Overlap, draw: &SingleLetterDraw) -> Result<Vec<DMatrix<f64>>> {
        q.check_against(self.channels())?;
        let roots = q.sqrt_blocks();
        let mut b = vec![0.0; self.layout.width];
        self.field_from_y(&roots, &draw.y_blocks, &mut b);
        let mut mean = vec![0.0; self.layout.width];
        self.posterior_flat(&b, &mut Vec::new(), &mut mean)?;
        Ok((0..self.layout.len()).map(|l| self.layout.block_matrix(l, &mean)).collect())
    }

    /// Draw `g*` for outer sample `index`. Exact Haar when the atoms are exact,
    /// otherwise uniformly from the atoms, so the discrete prior is matched.
    pub(crate) fn outer_star<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, GroupElement) {
        if self.atoms.exact {
            let g = haar_sample(&self.layout.group(), rng);
            (usize::MAX, g)
        } else {
            let i = rng.gen_range(0..self.atoms.len());
            (i, self.atoms.elements[i].clone())
        }
    }

    pub(crate) fn star_features(&self, idx: usize, g: &GroupElement, out: &mut [f64]) {
        if idx == usize::MAX {
            self.layout.features(g, out);
        } else {
            let w = self.layout.width;
            out.copy_from_slice(&self.atoms.features[idx * w..(idx + 1) * w]);
        }
    }

    /// Scratch space for one chunk of outer samples; its generator is the
    /// chunk's common-random-number stream.
    pub(crate) fn workspace(&self, chunk: usize) -> Workspace {
        let rng = stream(derive(self.cfg.seed, tag::OUTER), chunk as u64);
        Workspace::new(self.layout.width, self.atoms.len(), rng)
    }

    /// Next outer draw `(g* features, z)` from the workspace stream.
    pub(crate) fn outer_draw(&self, ws: &mut Workspace) {
        let (idx, g) = self.outer_star(&mut ws.rng);
        self.star_features(idx, &g, &mut ws.star);
        for v in ws.z.iter_mut() {
            *v = ws.rng.sample(StandardNormal);
        }
    }

    /// One pass over the outer draws at `q`.
    pub fn evaluate(&self, q: &Overlap) -> Result<ChannelStats> {
        q.check_against(self.channels())?;
        let prep = self.prepare(q);
        let nl = self.layout.len();
        let w = self.layout.width;
        // [log Z | ⟨g⟩ᵀ⟨g⟩ blocks | g*ᵀ⟨g⟩ blocks | per-channel Nishimori differences]
        let dim = 1 + 2 * w + nl;
        let signs: &[f64] = if self.cfg.antithetic { &[1.0, -1.0] } else { &[1.0] };
        let scale = 1.0 / signs.len() as f64;
        let failure = std::sync::Mutex::new(None);
        let acc = accumulate_with(self.cfg.mc_samples, dim, |c| self.workspace(c), |ws, _, out| {
            self.outer_draw(ws);
            for &s in signs {
                self.field(&prep, &ws.star, &ws.z, s, &mut ws.b);
                match self.posterior_flat(&ws.b, &mut ws.scratch, &mut ws.mean) {
                    Ok(lz) => out[0] += scale * lz,
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e);
                        return;
                    }
                }
                for (l, &k) in self.layout.dims.iter().enumerate() {
                    let o = self.layout.offsets[l];
                    let m = &ws.mean[o..o + k * k];
                    let g = &ws.star[o..o + k * k];
                    let (mut tr_mm, mut tr_gm) = (0.0, 0.0);
                    for j in 0..k {
                        for i in 0..k {
                            let (mut mm, mut gm) = (0.0, 0.0);
                            for r in 0..k {
                                mm += m[r + i * k] * m[r + j * k];
                                gm += g[r + i * k] * m[r + j * k];
                            }
                            out[1 + o + i + j * k] += scale * mm;
                            out[1 + w + o + i + j * k] += scale * gm;
                            if i == j {
                                tr_mm += mm;
                                tr_gm += gm;
                            }
                        }
                    }
                    out[1 + 2 * w + l] += scale * (tr_gm - tr_mm);
                }
            }
        });
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
        Ok(self.collect(&acc))
    }

    fn collect(&self, acc: &VecMoments) -> ChannelStats {
        let w = self.layout.width;
        let nl = self.layout.len();
        let block = |base: usize, l: usize, f: &dyn Fn(usize) -> f64| {
            let k = self.layout.dims[l];
            let o = self.layout.offsets[l];
            DMatrix::from_fn(k, k, |r, c| f(base + o + r + c * k))
        };
        let second_moment = (0..nl).map(|l| symmetrize(&block(1, l, &|i| acc.mean(i)))).collect();
        let second_moment_stderr = (0..nl).map(|l| block(1, l, &|i| acc.stderr(i))).collect();
        let cross_moment = (0..nl).map(|l| block(1 + w, l, &|i| acc.mean(i))).collect();
        let nishimori_gap = (0..nl).map(|l| acc.estimate(1 + 2 * w + l)).collect();
        ChannelStats {
            log_partition: acc.estimate(0),
            second_moment,
            second_moment_stderr,
            cross_moment,
            nishimori_gap,
            samples: acc.n,
        }
    }

    /// `F(q)`: symmetrized, PSD-clipped `E⟨g_ℓ⟩ᵀ⟨g_ℓ⟩`.
    pub fn state_map(&self, q: &Overlap) -> Result<(Overlap, ChannelStats)> {
        let stats = self.evaluate(q)?;
        let f = Overlap::project(stats.second_moment.clone())?;
        Ok((f, stats))
    }
}

/// `⟨g_ℓ⟩_q` for one draw of the single-sample channel.
pub fn posterior_mean(
    channels: &[RepChannel],
    q: &Overlap,
    draw: &SingleLetterDraw,
    cfg: &EstimatorConfig,
) -> Result<Vec<DMatrix<f64>>> {
    SingleLetter::new(channels, cfg)?.posterior_mean(q, draw)
}

/// State-evolution map `F(q)_ℓ = E⟨g_ℓ⟩ᵀ⟨g_ℓ⟩`, with per-entry standard errors.
pub fn state_map(channels: &[RepChannel], q: &Overlap, cfg: &EstimatorConfig) -> Result<(Overlap, Vec<DMatrix<f64>>)> {
    let (f, stats) = SingleLetter::new(channels, cfg)?.state_map(q)?;
    Ok((f, stats.second_moment_stderr))
}
