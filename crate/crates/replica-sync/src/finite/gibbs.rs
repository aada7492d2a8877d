use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::SyncInstance;
use crate::error::{invalid, Result};
use crate::group::{enumerate, haar_sample, GroupElement, GroupSpec};
use crate::rng::{derive, stream, tag};

const TARGET_ACCEPTANCE: f64 = 0.4;

/// Cache the dense coupling matrix when it has at most this many entries.
const DENSE_LIMIT: usize = 4_000_000;

/// Recompute local fields from scratch this often to stop rounding drift.
const REFRESH_EVERY: usize = 64;

/// Posterior sampler state for one instance.
#[derive(Debug, Clone)]
pub struct GibbsChain {
    pub state: Vec<GroupElement>,
    /// Flattened `φ(g_i)` of the current state, `n × width`.
    pub features: Vec<f64>,
    pub sweep_count: usize,
    pub rng: ChaCha8Rng,
    /// Random-walk scale for continuous groups.
    pub proposal_scale: f64,
    pub adapting: bool,
    pub accepted: u64,
    pub proposed: u64,
    table: Option<ElementTable>,
    /// Local fields `M_i` of the current state, maintained incrementally.
    fields: Vec<f64>,
    coupling: Option<Arc<Vec<f64>>>,
}

/// All elements of a finite group with their features.
#[derive(Debug, Clone)]
struct ElementTable {
    elements: Vec<GroupElement>,
    features: Vec<f64>,
}

impl GibbsChain {
    /// Chain started from a Haar-random configuration.
    pub fn new(instance: &SyncInstance, seed: u64) -> Result<Self> {
        let mut rng = stream(derive(seed, tag::CHAIN), 0);
        let group = instance.layout.group();
        let state: Vec<GroupElement> = (0..instance.n).map(|_| haar_sample(&group, &mut rng)).collect();
        Self::from_state(instance, state, rng)
    }

    pub fn from_state(instance: &SyncInstance, state: Vec<GroupElement>, rng: ChaCha8Rng) -> Result<Self> {
        if state.len() != instance.n {
            return Err(invalid("chain state length must equal n"));
        }
        let group = instance.layout.group();
        let table = if group.is_finite() {
            let elements = enumerate(&group)?;
            let features = instance.features_of(&elements);
            Some(ElementTable { elements, features })
        } else {
            None
        };
        let features = instance.features_of(&state);
        let nw = instance.n * instance.layout.width;
        let coupling = (nw * nw <= DENSE_LIMIT).then(|| Arc::new(instance.dense_couplings()));
        let mut chain = Self {
            state,
            features,
            sweep_count: 0,
            rng,
            proposal_scale: 1.0,
            adapting: true,
            accepted: 0,
            proposed: 0,
            table,
            fields: vec![0.0; nw],
            coupling,
        };
        chain.refresh_fields(instance);
        Ok(chain)
    }

    fn refresh_fields(&mut self, instance: &SyncInstance) {
        let w = instance.layout.width;
        match &self.coupling {
            Some(c) => {
                let nw = self.fields.len();
                self.fields.iter_mut().for_each(|v| *v = 0.0);
                for (r, &x) in self.features.iter().enumerate() {
                    if x != 0.0 {
                        for (f, c) in self.fields.iter_mut().zip(&c[r * nw..(r + 1) * nw]) {
                            *f += x * c;
                        }
                    }
                }
            }
            None => {
                for i in 0..instance.n {
                    instance.local_field(i, &self.features, &mut self.fields[i * w..(i + 1) * w]);
                }
            }
        }
    }

    /// Move site `i` to `new` and update every other site's field.
    fn apply(&mut self, instance: &SyncInstance, i: usize, new: &[f64]) {
        let w = instance.layout.width;
        let delta: Vec<f64> = new.iter().zip(&self.features[i * w..(i + 1) * w]).map(|(a, b)| a - b).collect();
        self.features[i * w..(i + 1) * w].copy_from_slice(new);
        match &self.coupling {
            Some(c) => {
                let nw = self.fields.len();
                for (b, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let row = &c[(i * w + b) * nw..(i * w + b + 1) * nw];
                        for (f, c) in self.fields.iter_mut().zip(row) {
                            *f += d * c;
                        }
                    }
                }
            }
            None => {
                for j in (0..instance.n).filter(|&j| j != i) {
                    instance.add_field(j, i, &delta, 1.0, &mut self.fields[j * w..(j + 1) * w]);
                }
            }
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// Stop adapting the proposal scale; later sweeps use a fixed kernel.
    pub fn freeze(&mut self) {
        self.adapting = false;
        self.accepted = 0;
        self.proposed = 0;
    }

    /// Exact single-site conditional probabilities over the group elements
    /// (finite groups only).
    pub fn conditional(&self, instance: &SyncInstance, i: usize) -> Option<Vec<f64>> {
        let t = self.table.as_ref()?;
        let w = instance.layout.width;
        let mut m = vec![0.0; w];
        instance.local_field(i, &self.features, &mut m);
        Some(softmax(&t.features, &m, w))
    }
}

fn softmax(features: &[f64], field: &[f64], w: usize) -> Vec<f64> {
    let e: Vec<f64> = features.chunks(w).map(|f| f.iter().zip(field).map(|(a, b)| a * b).sum()).collect();
    let mx = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let p: Vec<f64> = e.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = p.iter().sum();
    p.into_iter().map(|v| v / s).collect()
}

/// One pass over the sites. Finite groups draw each site from its exact
/// conditional; continuous groups use random-walk Metropolis, with the scale
/// adapted toward acceptance 0.4 until [`GibbsChain::freeze`].
pub fn gibbs_sweep(instance: &SyncInstance, chain: &mut GibbsChain) {
    let w = instance.layout.width;
    let group = instance.layout.group();
    let mut m = vec![0.0; w];
    let mut prop = vec![0.0; w];
    let mut acc_sweep = 0u64;
    for i in 0..instance.n {
        m.copy_from_slice(&chain.fields[i * w..(i + 1) * w]);
        let cur = &chain.features[i * w..(i + 1) * w];
        if let Some(t) = &chain.table {
            let p = softmax(&t.features, &m, w);
            let u: f64 = chain.rng.gen();
            let mut c = 0.0;
            let mut pick = p.len() - 1;
            for (a, pa) in p.iter().enumerate() {
                c += pa;
                if u < c {
                    pick = a;
                    break;
                }
            }
            chain.state[i] = t.elements[pick].clone();
            prop.copy_from_slice(&t.features[pick * w..(pick + 1) * w]);
            chain.apply(instance, i, &prop);
            acc_sweep += 1;
            continue;
        }
        let proposal = propose(&group, &chain.state[i], chain.proposal_scale, &mut chain.rng);
        instance.layout.features(&proposal, &mut prop);
        let delta: f64 = prop.iter().zip(cur).zip(&m).map(|((a, b), f)| (a - b) * f).sum();
        if delta >= 0.0 || chain.rng.gen::<f64>() < delta.exp() {
            chain.state[i] = proposal;
            chain.apply(instance, i, &prop);
            acc_sweep += 1;
        }
    }
    chain.accepted += acc_sweep;
    chain.proposed += instance.n as u64;
    chain.sweep_count += 1;
    if chain.sweep_count % REFRESH_EVERY == 0 {
        chain.refresh_fields(instance);
    }
    if chain.table.is_none() && chain.adapting {
        let rate = acc_sweep as f64 / instance.n as f64;
        let gain = (chain.sweep_count as f64).powf(-0.6);
        chain.proposal_scale = (chain.proposal_scale.ln() + gain * (rate - TARGET_ACCEPTANCE)).exp().clamp(1e-4, 10.0);
    }
}

fn propose(group: &GroupSpec, g: &GroupElement, scale: f64, rng: &mut ChaCha8Rng) -> GroupElement {
    match (group, g) {
        (GroupSpec::SO2, GroupElement::Angle(t)) => {
            let step: f64 = rng.sample(StandardNormal);
            GroupElement::Angle(crate::group::wrap_angle(t + scale * step))
        }
        (GroupSpec::SOk(k), GroupElement::Rotation(r)) => {
            // Cayley transform of a random skew matrix; symmetric in law.
            let k = *k;
            let mut a = DMatrix::<f64>::zeros(k, k);
            for i in 0..k {
                for j in 0..i {
                    let v: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
                    a[(i, j)] = v;
                    a[(j, i)] = -v;
                }
            }
            let id = DMatrix::<f64>::identity(k, k);
            let c = (&id - &a * 0.5).try_inverse().expect("I − A/2 is invertible for skew A") * (&id + &a * 0.5);
            GroupElement::Rotation(r * c)
        }
        _ => unreachable!("finite groups use exact conditionals"),
    }
}
