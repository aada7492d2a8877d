use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::group::{haar_sample, ChannelLayout, GroupElement, RepChannel};
use crate::rng::{derive, stream, tag};

/// Observations `y_ℓ^{(ij)} = √λ_ℓ φ_ℓ(g*_i) φ_ℓ(g*_j)ᵀ + √N z_ℓ^{(ij)}` for `i < j`.
///
/// Pairs are stored in the order `(0,1), (0,2), (1,2), (0,3), …`, and the
/// truth and noise are drawn sequentially in that order, so an instance of
/// size `n` shares its truth and standard-normal noise with the leading
/// `n′ < n` sites of any larger instance built from the same seed.
#[derive(Debug, Clone)]
pub struct SyncInstance {
    pub n: usize,
    pub layout: ChannelLayout,
    pub g_star: Vec<GroupElement>,
    /// Flattened `φ(g*_i)`, `n × width`.
    pub star_features: Vec<f64>,
    /// Flattened observations, one `width`-block per pair.
    pub y: Vec<f64>,
    pub seed: u64,
}

/// Position of the pair `(i, j)`, `i < j`.
pub fn pair_index(i: usize, j: usize) -> usize {
    debug_assert!(i < j);
    j * (j - 1) / 2 + i
}

/// Draw a synthetic instance. Deterministic in `seed`.
pub fn generate_sync(n: usize, channels: &[RepChannel], seed: u64) -> Result<SyncInstance> {
    if n < 1 {
        return Err(invalid("n must be at least 1"));
    }
    let layout = ChannelLayout::new(channels)?;
    let mut srng = stream(derive(seed, tag::SIGNAL), 0);
    let g_star: Vec<GroupElement> = (0..n).map(|_| haar_sample(&layout.group(), &mut srng)).collect();
    let mut noise = stream(derive(seed, tag::NOISE), 0);
    let z: Vec<f64> = (0..n * (n - 1) / 2 * layout.width).map(|_| noise.sample(StandardNormal)).collect();
    SyncInstance::from_parts(layout, g_star, &z, seed)
}

impl SyncInstance {
    /// Build observations from an explicit truth and standard-normal noise.
    pub fn from_parts(layout: ChannelLayout, g_star: Vec<GroupElement>, z: &[f64], seed: u64) -> Result<Self> {
        let n = g_star.len();
        let w = layout.width;
        if z.len() != n * (n - 1) / 2 * w {
            return Err(invalid("noise length does not match the number of pairs"));
        }
        if let Some(g) = g_star.iter().find(|g| !layout.group().contains(g)) {
            return Err(invalid(format!("element {g:?} is not in {}", layout.group())));
        }
        let mut star_features = vec![0.0; n * w];
        for (g, row) in g_star.iter().zip(star_features.chunks_mut(w)) {
            layout.features(g, row);
        }
        let mut inst = Self { n, layout, g_star, star_features, y: vec![0.0; z.len()], seed };
        let scale = (n as f64).sqrt();
        for j in 1..n {
            for i in 0..j {
                let p = pair_index(i, j);
                let mut sig = vec![0.0; w];
                inst.signal_into(i, j, &mut sig);
                for t in 0..w {
                    inst.y[p * w + t] = sig[t] + scale * z[p * w + t];
                }
            }
        }
        Ok(inst)
    }

    /// Wrap stored observations without redrawing anything.
    pub fn from_observations(layout: ChannelLayout, g_star: Vec<GroupElement>, y: Vec<f64>, seed: u64) -> Result<Self> {
        let n = g_star.len();
        let w = layout.width;
        if y.len() != n * (n.max(1) - 1) / 2 * w {
            return Err(invalid("observation length does not match the number of pairs"));
        }
        if let Some(g) = g_star.iter().find(|g| !layout.group().contains(g)) {
            return Err(invalid(format!("element {g:?} is not in {}", layout.group())));
        }
        let mut star_features = vec![0.0; n * w];
        for (g, row) in g_star.iter().zip(star_features.chunks_mut(w)) {
            layout.features(g, row);
        }
        Ok(Self { n, layout, g_star, star_features, y, seed })
    }

    pub fn channels(&self) -> &[RepChannel] {
        &self.layout.channels
    }

    pub fn pairs(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    pub fn star(&self, i: usize) -> &[f64] {
        let w = self.layout.width;
        &self.star_features[i * w..(i + 1) * w]
    }

    pub fn y_pair(&self, i: usize, j: usize) -> &[f64] {
        let w = self.layout.width;
        let p = pair_index(i, j);
        &self.y[p * w..(p + 1) * w]
    }

    /// `√λ_ℓ φ_ℓ(g*_i) φ_ℓ(g*_j)ᵀ`, flattened.
    pub fn signal_into(&self, i: usize, j: usize, out: &mut [f64]) {
        let (a, b) = (self.star(i), self.star(j));
        for (l, c) in self.layout.channels.iter().enumerate() {
            let k = self.layout.dims[l];
            let o = self.layout.offsets[l];
            let s = c.snr.sqrt();
            for col in 0..k {
                for row in 0..k {
                    let mut acc = 0.0;
                    for m in 0..k {
                        acc += a[o + row + m * k] * b[o + col + m * k];
                    }
                    out[o + row + col * k] = s * acc;
                }
            }
        }
    }

    /// Recover the standard-normal noise `z = (y − signal)/√N`.
    pub fn noise(&self) -> Vec<f64> {
        let w = self.layout.width;
        let scale = (self.n as f64).sqrt();
        let mut z = vec![0.0; self.y.len()];
        let mut sig = vec![0.0; w];
        for j in 1..self.n {
            for i in 0..j {
                let p = pair_index(i, j);
                self.signal_into(i, j, &mut sig);
                for t in 0..w {
                    z[p * w + t] = (self.y[p * w + t] - sig[t]) / scale;
                }
            }
        }
        z
    }

    /// The instance obtained by replacing `g*_i` with `h g*_i` and `y_ij`
    /// with `φ(h) y_ij φ(h)ᵀ`. The posterior is carried along by `G ↦ hG`.
    pub fn left_translate(&self, h: &GroupElement) -> Result<Self> {
        let group = self.layout.group();
        let g_star = self.g_star.iter().map(|g| group.multiply(h, g)).collect::<Result<Vec<_>>>()?;
        let w = self.layout.width;
        let mut hf = vec![0.0; w];
        self.layout.features(h, &mut hf);
        let mut y = self.y.clone();
        for p in 0..self.pairs() {
            for (l, &k) in self.layout.dims.iter().enumerate() {
                let o = self.layout.offsets[l];
                let blk = &self.y[p * w + o..p * w + o + k * k];
                let r = &hf[o..o + k * k];
                for col in 0..k {
                    for row in 0..k {
                        let mut acc = 0.0;
                        for a in 0..k {
                            for b in 0..k {
                                acc += r[row + a * k] * blk[a + b * k] * r[col + b * k];
                            }
                        }
                        y[p * w + o + row + col * k] = acc;
                    }
                }
            }
        }
        let mut star_features = vec![0.0; self.n * w];
        for (g, row) in g_star.iter().zip(star_features.chunks_mut(w)) {
            self.layout.features(g, row);
        }
        Ok(Self { n: self.n, layout: self.layout.clone(), g_star, star_features, y, seed: self.seed })
    }

    /// The constant `−(1/2N) Σ_{i<j} Σ_ℓ λ_ℓ k_ℓ`.
    pub fn hamiltonian_offset(&self) -> f64 {
        let per_pair: f64 = self.layout.channels.iter().map(|c| c.snr * c.dim() as f64).sum();
        -0.5 * per_pair * self.pairs() as f64 / self.n as f64
    }

    /// Add `(√λ/N) ỹ_{ij} φ(g_j)` to `out`, where `ỹ_{ij}` is `y_ij` for `i < j`
    /// and `y_jiᵀ` otherwise; `feat_j` is the flattened `φ(g_j)`.
    pub(crate) fn add_field(&self, i: usize, j: usize, feat_j: &[f64], weight: f64, out: &mut [f64]) {
        let inv_n = weight / self.n as f64;
        let (blk, transposed) = if i < j { (self.y_pair(i, j), false) } else { (self.y_pair(j, i), true) };
        for (l, c) in self.layout.channels.iter().enumerate() {
            let k = self.layout.dims[l];
            let o = self.layout.offsets[l];
            let s = c.snr.sqrt() * inv_n;
            for col in 0..k {
                for row in 0..k {
                    let mut acc = 0.0;
                    for m in 0..k {
                        let y = if transposed { blk[o + m + row * k] } else { blk[o + row + m * k] };
                        acc += y * feat_j[o + m + col * k];
                    }
                    out[o + row + col * k] += s * acc;
                }
            }
        }
    }

    /// Local field `M_i` with `H(G) = const + ⟨φ(g_i), M_i⟩ + (terms without g_i)`.
    pub(crate) fn local_field(&self, i: usize, feats: &[f64], out: &mut [f64]) {
        let w = self.layout.width;
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            if j != i {
                self.add_field(i, j, &feats[j * w..(j + 1) * w], 1.0, out);
            }
        }
    }

    /// Dense couplings, `(n·width)²`: row `i·w + b` holds the field on every
    /// site per unit of coordinate `b` of site `i`.
    pub(crate) fn dense_couplings(&self) -> Vec<f64> {
        let w = self.layout.width;
        let nw = self.n * w;
        let mut coupling = vec![0.0; nw * nw];
        let mut unit = vec![0.0; w];
        for i in 0..self.n {
            for b in 0..w {
                unit.iter_mut().for_each(|v| *v = 0.0);
                unit[b] = 1.0;
                let row = &mut coupling[(i * w + b) * nw..(i * w + b + 1) * nw];
                for j in (0..self.n).filter(|&j| j != i) {
                    self.add_field(j, i, &unit, 1.0, &mut row[j * w..(j + 1) * w]);
                }
            }
        }
        coupling
    }

    /// `H(G; Y)` for flattened features of a configuration.
    pub fn hamiltonian(&self, feats: &[f64]) -> f64 {
        let w = self.layout.width;
        let mut h = self.hamiltonian_offset();
        let mut m = vec![0.0; w];
        for j in 1..self.n {
            m.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..j {
                self.add_field(j, i, &feats[i * w..(i + 1) * w], 1.0, &mut m);
            }
            h += m.iter().zip(&feats[j * w..(j + 1) * w]).map(|(a, b)| a * b).sum::<f64>();
        }
        h
    }

    pub fn features_of(&self, g: &[GroupElement]) -> Vec<f64> {
        let w = self.layout.width;
        let mut out = vec![0.0; g.len() * w];
        for (e, row) in g.iter().zip(out.chunks_mut(w)) {
            self.layout.features(e, row);
        }
        out
    }
}
