//! Run configuration in TOML. The repository README lists every key.
//! Errors carry the 1-based line of the offending key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Spanned;

use super::table::Format;
use crate::error::{Error, Result};
use crate::group::{ChannelSpec, GroupSpec, MergeRule, RepChannel, RepKind};
use crate::qa::{BaseMeasure, KernelKind, KernelSpec};
use crate::single_letter::EstimatorConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub damping: f64,
    /// Residual threshold of deterministic scalar solvers.
    pub tol: f64,
    /// Residual threshold of Monte Carlo fixed points; `None` adapts to the noise.
    pub mc_tol: Option<f64>,
    pub max_iter: usize,
    /// Starting points of the landscape scan.
    pub starts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-6, mc_tol: None, max_iter: 500, starts: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateConfig {
    pub n: usize,
    pub burn_in: usize,
    pub samples: usize,
    pub thinning: usize,
    pub seeds: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { n: 200, burn_in: 2000, samples: 2000, thinning: 5, seeds: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactConfig {
    pub sizes: Vec<usize>,
    pub draws: usize,
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self { sizes: vec![8, 12, 16, 20], draws: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QaConfig {
    pub ranks: Vec<usize>,
    pub nodes: usize,
    pub scales: Vec<f64>,
    /// Disorder draws for small-n enumeration.
    pub n: usize,
}

impl Default for QaConfig {
    fn default() -> Self {
        Self { ranks: (1..=6).collect(), nodes: 256, scales: Vec::new(), n: 8 }
    }
}

/// Fully resolved run configuration. Every output embeds it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Option<String>,
    pub estimator: EstimatorConfig,
    /// Results do not depend on the thread count, so it is not recorded.
    #[serde(skip)]
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub merge: MergeRule,
    pub channels: Vec<ChannelSpec>,
    pub solver: SolverConfig,
    /// SNR grid (`so2`) or SNR multipliers (`phase-diagram`).
    pub lambdas: Vec<f64>,
    /// `phase-diagram` skips multipliers that put any channel within this
    /// relative distance of its threshold, where the MMSE limit may not exist.
    pub critical_band: f64,
    pub simulate: SimulateConfig,
    pub exact: ExactConfig,
    pub kernel: Option<KernelSpec>,
    pub qa: QaConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            estimator: EstimatorConfig::default(),
            threads: None,
            output: None,
            format: Format::Csv,
            merge: MergeRule::default(),
            channels: Vec::new(),
            solver: SolverConfig::default(),
            lambdas: Vec::new(),
            critical_band: 0.02,
            simulate: SimulateConfig::default(),
            exact: ExactConfig::default(),
            kernel: None,
            qa: QaConfig::default(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Option<String>,
    seed: Option<u64>,
    mc_samples: Option<Spanned<i64>>,
    inner_resolution: Option<Spanned<i64>>,
    antithetic: Option<bool>,
    threads: Option<Spanned<i64>>,
    output: Option<PathBuf>,
    format: Option<Spanned<String>>,
    merge: Option<Spanned<String>>,
    lambda: Option<Spanned<Vec<f64>>>,
    critical_band: Option<Spanned<f64>>,
    #[serde(default)]
    channel: Vec<Spanned<RawChannel>>,
    solver: Option<RawSolver>,
    simulate: Option<RawSimulate>,
    exact: Option<RawExact>,
    kernel: Option<Spanned<RawKernel>>,
    qa: Option<RawQa>,
}

/// One `[[channel]]` entry; the same keys are accepted on the command line.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawChannel {
    pub group: String,
    pub k: Option<i64>,
    pub harmonic: Option<i64>,
    /// `irreducible` (default), `cyclic_complement`, `permutation_action` or `trivial`.
    pub kind: Option<String>,
    /// `sign` selects the sign representation where it exists.
    pub rep: Option<String>,
    pub dim: Option<i64>,
    pub snr: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    damping: Option<Spanned<f64>>,
    tol: Option<Spanned<f64>>,
    mc_tol: Option<Spanned<f64>>,
    max_iter: Option<Spanned<i64>>,
    starts: Option<Spanned<i64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulate {
    n: Option<Spanned<i64>>,
    burn_in: Option<Spanned<i64>>,
    samples: Option<Spanned<i64>>,
    thinning: Option<Spanned<i64>>,
    seeds: Option<Spanned<i64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExact {
    sizes: Option<Spanned<Vec<i64>>>,
    draws: Option<Spanned<i64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    kind: String,
    coeffs: Option<Vec<f64>>,
    weights: Option<Vec<f64>>,
    features: Option<Vec<Vec<f64>>>,
    bandwidth: Option<f64>,
    base: String,
    points: Option<Vec<f64>>,
    point_weights: Option<Vec<f64>>,
    scale: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQa {
    ranks: Option<Spanned<Vec<i64>>>,
    nodes: Option<Spanned<i64>>,
    scales: Option<Spanned<Vec<f64>>>,
    n: Option<Spanned<i64>>,
}

struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn line(&self, offset: usize) -> usize {
        1 + self.0.as_bytes()[..offset.min(self.0.len())].iter().filter(|&&b| b == b'\n').count()
    }

    fn err<T>(&self, s: &Spanned<T>, msg: impl Into<String>) -> Error {
        Error::Config { line: self.line(s.span().start), msg: msg.into() }
    }

    fn count(&self, v: &Option<Spanned<i64>>, name: &str, min: i64, default: usize) -> Result<usize> {
        match v {
            None => Ok(default),
            Some(s) if *s.get_ref() >= min => Ok(*s.get_ref() as usize),
            Some(s) => Err(self.err(s, format!("{name} must be >= {min}, got {}", s.get_ref()))),
        }
    }

    fn positive(&self, v: &Option<Spanned<f64>>, name: &str) -> Result<Option<f64>> {
        match v {
            None => Ok(None),
            Some(s) if *s.get_ref() > 0.0 && s.get_ref().is_finite() => Ok(Some(*s.get_ref())),
            Some(s) => Err(self.err(s, format!("{name} must be positive, got {}", s.get_ref()))),
        }
    }
}

pub fn parse_group(name: &str, k: Option<i64>) -> std::result::Result<GroupSpec, String> {
    let need_k = || -> std::result::Result<usize, String> {
        match k {
            Some(k) if k >= 2 => Ok(k as usize),
            Some(k) => Err(format!("group {name} needs k >= 2, got {k}")),
            None => Err(format!("group {name} needs k")),
        }
    };
    Ok(match name.to_ascii_lowercase().as_str() {
        "so2" | "u1" => GroupSpec::SO2,
        "sok" | "so" => GroupSpec::SOk(need_k()?),
        "cyclic" | "cyc" => GroupSpec::Cyclic(need_k()?),
        "symmetric" | "sym" => GroupSpec::Symmetric(need_k()?),
        "z2" => GroupSpec::Z2,
        other => return Err(format!("unknown group {other:?} (expected so2, sok, cyclic, sym or z2)")),
    })
}

impl RawChannel {
    /// Resolve to a catalog construction.
    pub fn resolve(&self) -> std::result::Result<ChannelSpec, String> {
        if !(self.snr >= 0.0 && self.snr.is_finite()) {
            return Err(format!("snr must be nonnegative and finite, got {}", self.snr));
        }
        let snr = self.snr;
        let group = parse_group(&self.group, self.k)?;
        let kind = self.kind.as_deref().unwrap_or("irreducible");
        let sign = matches!(self.rep.as_deref(), Some("sign"));
        let e = |r: crate::Result<RepChannel>| r.map(ChannelSpec::Irreducible).map_err(|e| e.to_string());
        match (kind, group) {
            ("irreducible", GroupSpec::SO2) => {
                let h = self.harmonic.unwrap_or(1);
                if h < 1 {
                    return Err(format!("harmonic must be >= 1, got {h}"));
                }
                e(RepChannel::so2(h as u32, snr))
            }
            ("irreducible", GroupSpec::SOk(k)) => e(RepChannel::sok(k, snr)),
            ("irreducible", g @ GroupSpec::Cyclic(k)) => {
                if sign {
                    e(RepChannel::new(g, RepKind::Sign, snr))
                } else {
                    let h = self.harmonic.unwrap_or(1);
                    if h < 1 {
                        return Err(format!("harmonic must be >= 1, got {h}"));
                    }
                    Ok(ChannelSpec::CyclicPlaneAny { k, harmonic: h as usize, snr })
                }
            }
            ("irreducible", g @ GroupSpec::Symmetric(k)) => {
                if sign {
                    e(RepChannel::new(g, RepKind::Sign, snr))
                } else {
                    e(RepChannel::symmetric(k, snr))
                }
            }
            ("irreducible", GroupSpec::Z2) => e(RepChannel::z2(snr)),
            ("cyclic_complement", GroupSpec::Cyclic(k)) => Ok(ChannelSpec::CyclicActionOnOrthogonalComplement { k, snr }),
            ("permutation_action", GroupSpec::Symmetric(k)) => Ok(ChannelSpec::PermutationAction { k, snr }),
            ("trivial", group) => match self.dim {
                Some(d) if d >= 1 => Ok(ChannelSpec::Trivial { group, dim: d as usize, snr }),
                _ => Err("trivial channel needs dim >= 1".into()),
            },
            (kind, g) => Err(format!("channel kind {kind:?} is not available for {g}")),
        }
    }

    /// Parse `key=value,key=value` as used by `--channel`.
    pub fn parse_inline(spec: &str) -> std::result::Result<Self, String> {
        let mut c = RawChannel { snr: f64::NAN, ..Default::default() };
        let mut have_snr = false;
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, val) = part.split_once('=').ok_or_else(|| format!("expected key=value, got {part:?}"))?;
            let int = || val.parse::<i64>().map_err(|_| format!("{key} must be an integer, got {val:?}"));
            match key.trim() {
                "group" => c.group = val.to_string(),
                "k" => c.k = Some(int()?),
                "harmonic" | "ell" => c.harmonic = Some(int()?),
                "kind" => c.kind = Some(val.to_string()),
                "rep" => c.rep = Some(val.to_string()),
                "dim" => c.dim = Some(int()?),
                "snr" | "lambda" => {
                    c.snr = val.parse().map_err(|_| format!("snr must be a number, got {val:?}"))?;
                    have_snr = true;
                }
                other => return Err(format!("unknown channel key {other:?}")),
            }
        }
        if c.group.is_empty() {
            return Err("channel needs a group".into());
        }
        if !have_snr {
            return Err("channel needs snr".into());
        }
        Ok(c)
    }
}

fn resolve_kernel(k: &RawKernel) -> std::result::Result<KernelSpec, String> {
    let base = match k.base.as_str() {
        "rademacher" => BaseMeasure::Rademacher,
        "uniform" => BaseMeasure::Uniform,
        "atoms" => BaseMeasure::Atoms {
            points: k.points.clone().ok_or("atoms base needs points")?,
            weights: k.point_weights.clone().ok_or("atoms base needs point_weights")?,
        },
        other => return Err(format!("unknown base measure {other:?} (expected rademacher, uniform or atoms)")),
    };
    let kind = match k.kind.as_str() {
        "rank_one" => KernelKind::RankOne { coeffs: k.coeffs.clone().unwrap_or_else(|| vec![0.0, 1.0]) },
        "finite_rank" => KernelKind::FiniteRank {
            weights: k.weights.clone().ok_or("finite_rank kernel needs weights")?,
            features: k.features.clone().ok_or("finite_rank kernel needs features")?,
        },
        "gaussian_rbf" => KernelKind::GaussianRbf { bandwidth: k.bandwidth.ok_or("gaussian_rbf kernel needs bandwidth")? },
        other => return Err(format!("unknown kernel kind {other:?} (expected rank_one, finite_rank or gaussian_rbf)")),
    };
    let spec = KernelSpec { kind, base, scale: k.scale.unwrap_or(1.0) };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

/// Parse and validate a configuration document, applying defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let lines = Lines(text);
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config {
        line: e.span().map(|s| lines.line(s.start)).unwrap_or(0),
        msg: e.message().to_string(),
    })?;
    let mut cfg = RunConfig { command: raw.command, ..Default::default() };
    if let Some(seed) = raw.seed {
        cfg.estimator.seed = seed;
    }
    cfg.estimator.mc_samples = lines.count(&raw.mc_samples, "mc_samples", 100, cfg.estimator.mc_samples)?;
    cfg.estimator.inner_resolution = lines.count(&raw.inner_resolution, "inner_resolution", 64, cfg.estimator.inner_resolution)?;
    cfg.estimator.antithetic = raw.antithetic.unwrap_or(false);
    if raw.threads.is_some() {
        cfg.threads = Some(lines.count(&raw.threads, "threads", 1, 1)?);
    }
    cfg.output = raw.output;
    if let Some(f) = &raw.format {
        cfg.format = f.get_ref().parse().map_err(|e: Error| lines.err(f, e.to_string()))?;
    }
    if let Some(m) = &raw.merge {
        cfg.merge = match m.get_ref().as_str() {
            "sufficient" => MergeRule::SufficientStatistic,
            "equal_weight" => MergeRule::EqualWeight,
            other => return Err(lines.err(m, format!("unknown merge rule {other:?} (expected sufficient or equal_weight)"))),
        };
    }
    if let Some(l) = &raw.lambda {
        if let Some(bad) = l.get_ref().iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(lines.err(l, format!("lambda values must be nonnegative, got {bad}")));
        }
        cfg.lambdas = l.get_ref().clone();
    }
    if let Some(b) = &raw.critical_band {
        let v = *b.get_ref();
        if !(0.0..1.0).contains(&v) {
            return Err(lines.err(b, format!("critical_band must lie in [0, 1), got {v}")));
        }
        cfg.critical_band = v;
    }
    for c in &raw.channel {
        cfg.channels.push(c.get_ref().resolve().map_err(|m| lines.err(c, m))?);
    }
    if let Some(s) = &raw.solver {
        if let Some(d) = &s.damping {
            let v = *d.get_ref();
            if !(v > 0.0 && v <= 1.0) {
                return Err(lines.err(d, format!("damping must lie in (0, 1], got {v}")));
            }
            cfg.solver.damping = v;
        }
        if let Some(t) = lines.positive(&s.tol, "tol")? {
            cfg.solver.tol = t;
        }
        cfg.solver.mc_tol = lines.positive(&s.mc_tol, "mc_tol")?;
        cfg.solver.max_iter = lines.count(&s.max_iter, "max_iter", 1, cfg.solver.max_iter)?;
        cfg.solver.starts = lines.count(&s.starts, "starts", 1, cfg.solver.starts)?;
    }
    if let Some(s) = &raw.simulate {
        let d = SimulateConfig::default();
        cfg.simulate = SimulateConfig {
            n: lines.count(&s.n, "n", 2, d.n)?,
            burn_in: lines.count(&s.burn_in, "burn_in", 0, d.burn_in)?,
            samples: lines.count(&s.samples, "samples", 2, d.samples)?,
            thinning: lines.count(&s.thinning, "thinning", 1, d.thinning)?,
            seeds: lines.count(&s.seeds, "seeds", 1, d.seeds)?,
        };
    }
    if let Some(e) = &raw.exact {
        if let Some(s) = &e.sizes {
            if s.get_ref().is_empty() || s.get_ref().iter().any(|&v| v < 1) {
                return Err(lines.err(s, "sizes must be a nonempty list of positive integers"));
            }
            cfg.exact.sizes = s.get_ref().iter().map(|&v| v as usize).collect();
        }
        cfg.exact.draws = lines.count(&e.draws, "draws", 1, cfg.exact.draws)?;
    }
    if let Some(k) = &raw.kernel {
        cfg.kernel = Some(resolve_kernel(k.get_ref()).map_err(|m| lines.err(k, m))?);
    }
    if let Some(q) = &raw.qa {
        if let Some(r) = &q.ranks {
            let v = r.get_ref();
            if v.is_empty() || v[0] < 1 || v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(lines.err(r, "ranks must be an increasing list of positive integers"));
            }
            cfg.qa.ranks = v.iter().map(|&x| x as usize).collect();
        }
        cfg.qa.nodes = lines.count(&q.nodes, "nodes", 4, cfg.qa.nodes)?;
        if let Some(s) = &q.scales {
            if s.get_ref().iter().any(|v| !(*v > 0.0)) {
                return Err(lines.err(s, "scales must be positive"));
            }
            cfg.qa.scales = s.get_ref().clone();
        }
        cfg.qa.n = lines.count(&q.n, "n", 1, cfg.qa.n)?;
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}
