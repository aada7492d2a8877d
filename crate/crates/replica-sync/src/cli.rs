//! Command-line front end. [`run`] parses arguments, resolves the config,
//! runs one experiment and writes a CSV or JSON table.
//!
//! Exit codes: 0 on success, 2 on invalid arguments or config, 3 when
//! `--strict` is set and a solver did not converge.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::finite::{exact_free_energy_with, generate_sync, measure, ExactOptions, GibbsChain};
use crate::group::{canonicalize_with, classify, GroupSpec, RepChannel, RepKind};
use crate::io::{load_config, Cell, RawChannel, RunConfig, Table};
use crate::qa::{mercer_truncate, qa_scale_sweep, qa_solve, BaseMeasure, KernelKind, KernelSpec};
use crate::replica::{hessian_at_zero, landscape_scan, so2_solve, FixedPointOptions, ReplicaSolution};
use crate::rng::{derive, mix, tag};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "REPLICA_SYNC_THREADS";

/// Fewest samples accepted by the representation classifier.
const CLASSIFY_MIN: usize = 10_000;

/// SNR grid of the `so2` command when none is given.
const SO2_GRID: [f64; 10] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0];

#[derive(Parser, Debug)]
#[command(name = "replica-sync", version, about = "Replica predictions and finite-N checks for group synchronization")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long = "mc-samples", global = true)]
    mc_samples: Option<usize>,
    #[arg(long = "inner-resolution", global = true)]
    inner_resolution: Option<usize>,
    /// Worker threads; falls back to REPLICA_SYNC_THREADS, then all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit with code 3 when a solver does not converge.
    #[arg(long, global = true)]
    strict: bool,
    /// Channel as `key=value` pairs, e.g. `group=so2,harmonic=1,snr=2`. Repeatable.
    #[arg(long = "channel", global = true)]
    channels: Vec<String>,
    /// Single-channel shorthand: so2, sok, cyclic, sym or z2.
    #[arg(long, global = true)]
    group: Option<String>,
    #[arg(long, global = true)]
    k: Option<i64>,
    #[arg(long, global = true)]
    harmonic: Option<i64>,
    /// Representation selector; `sign` picks the sign representation.
    #[arg(long, global = true)]
    rep: Option<String>,
    /// SNR, or a comma-separated grid for sweeps.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    lambda: Vec<f64>,
    #[command(flatten)]
    kernel: KernelArgs,
}

#[derive(Args, Debug)]
struct KernelArgs {
    /// rank_one, gaussian_rbf (alias rbf).
    #[arg(long, global = true)]
    kernel: Option<String>,
    /// rademacher or uniform.
    #[arg(long, global = true)]
    base: Option<String>,
    #[arg(long, global = true)]
    bandwidth: Option<f64>,
    /// Kernel scale `s` in `s·κ`.
    #[arg(long, global = true)]
    scale: Option<f64>,
    /// Quadrature nodes for continuous base measures.
    #[arg(long, global = true)]
    nodes: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Real/complex/quaternionic type and threshold of each channel.
    Classify,
    /// Algorithmic thresholds and the Hessian of the potential at zero.
    Threshold,
    /// Maximize the replica potential from several starts.
    Solve,
    /// Closed-form SO(2) solution over an SNR grid.
    So2,
    /// Solve with every SNR multiplied by each value of `--lambda`.
    PhaseDiagram {
        /// Skip multipliers within this relative distance of a threshold; 0 keeps all.
        #[arg(long = "critical-band")]
        critical_band: Option<f64>,
    },
    /// Sample posteriors of synthetic instances and compare with the replica prediction.
    Simulate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "burn-in")]
        burn_in: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        thinning: Option<usize>,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Disorder-averaged exact free energy by enumeration (finite groups).
    ExactFe {
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Mercer eigenvalues and truncation residuals.
    QaSpectrum {
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Maximize the assignment potential at one rank.
    QaSolve {
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Mutual information and MMSE limits over ranks and kernel scales.
    QaMi {
        #[arg(long, value_delimiter = ',')]
        ranks: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        scales: Vec<f64>,
    },
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Classify => "classify",
            Cmd::Threshold => "threshold",
            Cmd::Solve => "solve",
            Cmd::So2 => "so2",
            Cmd::PhaseDiagram { .. } => "phase-diagram",
            Cmd::Simulate { .. } => "simulate",
            Cmd::ExactFe { .. } => "exact-fe",
            Cmd::QaSpectrum { .. } => "qa-spectrum",
            Cmd::QaSolve { .. } => "qa-solve",
            Cmd::QaMi { .. } => "qa-mi",
        }
    }
}

/// Result of one command: the table, a one-line summary and whether every
/// solver converged.
struct Outcome {
    table: Table,
    summary: String,
    converged: bool,
}

/// Run the command line `argv` (program name first) and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) | Error::Numerical(_) => 1,
                _ => EXIT_INVALID,
            }
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let cfg = resolve(&cli)?;
    let threads = cli
        .global
        .threads
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()))
        .or(cfg.threads)
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| invalid(e.to_string()))?;
    let outcome = pool.install(|| dispatch(&cli.cmd, &cfg))?;
    let name = cli.cmd.name();
    match &cfg.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            outcome.table.write(&mut w, cfg.format, name, &cfg)?;
            w.flush()?;
            println!("{name}: {}", outcome.summary);
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            outcome.table.write(&mut w, cfg.format, name, &cfg)?;
            w.flush()?;
            eprintln!("{name}: {}", outcome.summary);
        }
    }
    if cli.global.strict && !outcome.converged {
        eprintln!("{name}: a solver did not converge");
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(EXIT_OK)
}

/// Merge the config file with command-line overrides.
fn resolve(cli: &Cli) -> Result<RunConfig> {
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    cfg.command = Some(cli.cmd.name().to_string());
    if let Some(s) = g.seed {
        cfg.estimator.seed = s;
    }
    if let Some(m) = g.mc_samples {
        cfg.estimator.mc_samples = m;
    }
    if let Some(r) = g.inner_resolution {
        cfg.estimator.inner_resolution = r;
    }
    cfg.estimator.validate()?;
    if let Some(t) = g.threads {
        if t == 0 {
            return Err(invalid("--threads must be at least 1"));
        }
        cfg.threads = Some(t);
    }
    if let Some(o) = &g.out {
        cfg.output = Some(o.clone());
    }
    if let Some(f) = &g.format {
        cfg.format = f.parse()?;
    }
    if let Some(bad) = g.lambda.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(invalid(format!("--lambda values must be nonnegative, got {bad}")));
    }
    if !g.lambda.is_empty() {
        cfg.lambdas = g.lambda.clone();
    }
    for spec in &g.channels {
        let raw = RawChannel::parse_inline(spec).map_err(invalid)?;
        cfg.channels.push(raw.resolve().map_err(invalid)?);
    }
    if let Some(group) = &g.group {
        let sweeps = matches!(cli.cmd, Cmd::So2 | Cmd::PhaseDiagram { .. });
        let snr = if sweeps { 1.0 } else { g.lambda.first().copied().unwrap_or(1.0) };
        let raw = RawChannel { group: group.clone(), k: g.k, harmonic: g.harmonic, rep: g.rep.clone(), snr, ..Default::default() };
        cfg.channels.push(raw.resolve().map_err(invalid)?);
    }
    match &cli.cmd {
        Cmd::Simulate { n, burn_in, samples, thinning, seeds } => {
            let s = &mut cfg.simulate;
            s.n = n.unwrap_or(s.n);
            s.burn_in = burn_in.unwrap_or(s.burn_in);
            s.samples = samples.unwrap_or(s.samples);
            s.thinning = thinning.unwrap_or(s.thinning);
            s.seeds = seeds.unwrap_or(s.seeds);
            if s.n < 2 || s.samples < 2 || s.thinning == 0 || s.seeds == 0 {
                return Err(invalid("simulate needs n >= 2, samples >= 2, thinning >= 1 and seeds >= 1"));
            }
        }
        Cmd::ExactFe { sizes, draws } => {
            if !sizes.is_empty() {
                cfg.exact.sizes = sizes.clone();
            }
            cfg.exact.draws = draws.unwrap_or(cfg.exact.draws);
            if cfg.exact.draws == 0 || cfg.exact.sizes.contains(&0) {
                return Err(invalid("exact-fe needs draws >= 1 and positive sizes"));
            }
        }
        Cmd::QaSpectrum { rank } | Cmd::QaSolve { rank } => {
            if let Some(r) = rank {
                if *r == 0 {
                    return Err(invalid("--rank must be at least 1"));
                }
                cfg.qa.ranks = (1..=*r).collect();
            }
        }
        Cmd::PhaseDiagram { critical_band: Some(b) } => {
            if !(0.0..1.0).contains(b) {
                return Err(invalid(format!("--critical-band must lie in [0, 1), got {b}")));
            }
            cfg.critical_band = *b;
        }
        Cmd::QaMi { ranks, scales } => {
            if !ranks.is_empty() {
                cfg.qa.ranks = ranks.clone();
            }
            if !scales.is_empty() {
                cfg.qa.scales = scales.clone();
            }
        }
        _ => {}
    }
    let k = &g.kernel;
    if let Some(n) = k.nodes {
        cfg.qa.nodes = n;
    }
    if k.kernel.is_some() || k.base.is_some() || k.bandwidth.is_some() || k.scale.is_some() {
        let base = match k.base.as_deref() {
            Some("rademacher") => BaseMeasure::Rademacher,
            Some("uniform") | None => cfg.kernel.as_ref().map(|s| s.base.clone()).unwrap_or(BaseMeasure::Uniform),
            Some(other) => return Err(invalid(format!("unknown base measure {other:?} (expected rademacher or uniform)"))),
        };
        let kind = match k.kernel.as_deref() {
            Some("rank_one") => KernelKind::RankOne { coeffs: vec![0.0, 1.0] },
            Some("gaussian_rbf") | Some("rbf") => KernelKind::GaussianRbf { bandwidth: k.bandwidth.unwrap_or(0.5) },
            Some(other) => return Err(invalid(format!("unknown kernel {other:?} (expected rank_one or gaussian_rbf)"))),
            None => match cfg.kernel.as_ref().map(|s| s.kind.clone()) {
                Some(KernelKind::GaussianRbf { bandwidth }) => KernelKind::GaussianRbf { bandwidth: k.bandwidth.unwrap_or(bandwidth) },
                Some(kind) => kind,
                None => return Err(invalid("--kernel is required")),
            },
        };
        let scale = k.scale.or(cfg.kernel.as_ref().map(|s| s.scale)).unwrap_or(1.0);
        let spec = KernelSpec { kind, base, scale };
        spec.validate()?;
        cfg.kernel = Some(spec);
    }
    Ok(cfg)
}

fn channels_of(cfg: &RunConfig) -> Result<Vec<RepChannel>> {
    if cfg.channels.is_empty() {
        return Err(invalid("no channels given (use --group, --channel or [[channel]])"));
    }
    let out = canonicalize_with(&cfg.channels, cfg.merge)?;
    if out.is_empty() {
        return Err(invalid("every channel is trivial"));
    }
    Ok(out)
}

fn kernel_of(cfg: &RunConfig) -> Result<&KernelSpec> {
    cfg.kernel.as_ref().ok_or_else(|| invalid("no kernel given (use --kernel or a [kernel] table)"))
}

fn fixed_point_options(cfg: &RunConfig) -> FixedPointOptions {
    FixedPointOptions { damping: cfg.solver.damping, tol: cfg.solver.mc_tol, max_iter: cfg.solver.max_iter }
}

fn table(cfg: &RunConfig, columns: &[&str]) -> Table {
    Table::new(columns, cfg.estimator.seed, cfg.estimator.mc_samples)
}

fn dispatch(cmd: &Cmd, cfg: &RunConfig) -> Result<Outcome> {
    match cmd {
        Cmd::Classify => cmd_classify(cfg),
        Cmd::Threshold => cmd_threshold(cfg),
        Cmd::Solve => cmd_solve(cfg),
        Cmd::So2 => cmd_so2(cfg),
        Cmd::PhaseDiagram { .. } => cmd_phase_diagram(cfg),
        Cmd::Simulate { .. } => cmd_simulate(cfg),
        Cmd::ExactFe { .. } => cmd_exact_fe(cfg),
        Cmd::QaSpectrum { .. } => cmd_qa_spectrum(cfg),
        Cmd::QaSolve { .. } => cmd_qa_solve(cfg),
        Cmd::QaMi { .. } => cmd_qa_mi(cfg),
    }
}

fn classifications(cfg: &RunConfig, channels: &[RepChannel]) -> Result<Vec<crate::group::RepClassification>> {
    let n = cfg.estimator.mc_samples.max(CLASSIFY_MIN);
    channels
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.estimator.seed ^ i as u64, tag::CLASSIFY));
            classify(c, n, &mut rng)
        })
        .collect()
}

fn cmd_classify(cfg: &RunConfig) -> Result<Outcome> {
    let channels = channels_of(cfg)?;
    let cls = classifications(cfg, &channels)?;
    let mut t = table(cfg, &["channel", "dim", "snr", "rho", "rho_stderr", "type", "threshold", "exact"]);
    for (c, r) in channels.iter().zip(&cls) {
        t.push(vec![
            c.to_string().into(),
            c.dim().into(),
            c.snr.into(),
            r.rho.into(),
            r.rho_stderr.into(),
            format!("{:?}", r.type_tag).into(),
            r.threshold.into(),
            r.exact.into(),
        ]);
    }
    let summary = channels
        .iter()
        .zip(&cls)
        .map(|(c, r)| format!("{c} rho={:.4} {:?} threshold={:.4}", r.rho, r.type_tag, r.threshold))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Outcome { table: t, summary, converged: true })
}

fn cmd_threshold(cfg: &RunConfig) -> Result<Outcome> {
    let channels = channels_of(cfg)?;
    let cls = classifications(cfg, &channels)?;
    let h = hessian_at_zero(&channels, &cls)?;
    let mut t = table(cfg, &["channel", "dim", "snr", "rho", "lambda_c", "effective_snr", "hessian_max_eig", "stable_at_zero"]);
    for (i, (c, r)) in channels.iter().zip(&cls).enumerate() {
        t.push(vec![
            c.to_string().into(),
            c.dim().into(),
            c.snr.into(),
            r.rho.into(),
            r.threshold.into(),
            h.effective_snrs[i].into(),
            h.block_max_eigs[i].into(),
            h.stable_at_zero.into(),
        ]);
    }
    let summary = channels
        .iter()
        .zip(&cls)
        .map(|(c, r)| format!("{c} lambda_c={}", crate::io::format_float(r.threshold)))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Outcome { table: t, summary: format!("{summary}; stable_at_zero={}", h.stable_at_zero), converged: true })
}

const SOLUTION_COLUMNS: [&str; 11] =
    ["channel", "snr", "q_frobenius", "q_trace", "mmse_limit", "psi", "psi_stderr", "mi_limit", "converged", "iterations", "residual"];

fn push_solution(t: &mut Table, prefix: Vec<Cell>, channels: &[RepChannel], s: &ReplicaSolution) {
    for (l, c) in channels.iter().enumerate() {
        let mut row = prefix.clone();
        row.extend([
            c.to_string().into(),
            c.snr.into(),
            s.q_star.blocks[l].norm().into(),
            s.q_star.blocks[l].trace().into(),
            s.mmse_limits[l].into(),
            s.psi_value.into(),
            s.psi_stderr.into(),
            s.mi_limit.into(),
            s.converged.into(),
            s.iterations.into(),
            s.residual.into(),
        ]);
        t.push(row);
    }
}

fn cmd_solve(cfg: &RunConfig) -> Result<Outcome> {
    let channels = channels_of(cfg)?;
    let report = landscape_scan(&channels, cfg.solver.starts, &fixed_point_options(cfg), &cfg.estimator)?;
    let mut cols = vec!["fixed_point_classes"];
    cols.extend(SOLUTION_COLUMNS);
    let mut t = table(cfg, &cols);
    let best = &report.best;
    push_solution(&mut t, vec![report.classes.len().into()], &channels, best);
    Ok(Outcome {
        summary: format!(
            "psi={:.6} mi={:.6} classes={} converged={}",
            best.psi_value,
            best.mi_limit,
            report.classes.len(),
            best.converged
        ),
        converged: best.converged,
        table: t,
    })
}

fn cmd_so2(cfg: &RunConfig) -> Result<Outcome> {
    let grid: Vec<f64> = if cfg.lambdas.is_empty() { SO2_GRID.to_vec() } else { cfg.lambdas.clone() };
    let mut t = table(cfg, &["lambda", "q_star", "psi", "mi", "mmse", "residual", "converged"]);
    let mut all = true;
    let mut last = String::new();
    for &lam in &grid {
        let s = so2_solve(lam)?;
        let q = s.q_star.blocks[0][(0, 0)];
        let ok = s.converged && s.residual <= cfg.solver.tol;
        all &= ok;
        t.push(vec![lam.into(), q.into(), s.psi_value.into(), s.mi_limit.into(), s.mmse_limits[0].into(), s.residual.into(), ok.into()]);
        last = format!("lambda={lam} q*={q:.6} mi={:.6} mmse={:.6}", s.mi_limit, s.mmse_limits[0]);
    }
    let summary = if grid.len() == 1 { last } else { format!("{} points, last {last}", grid.len()) };
    Ok(Outcome { table: t, summary, converged: all })
}

fn scaled(channels: &[RepChannel], m: f64) -> Result<Vec<RepChannel>> {
    channels.iter().map(|c| RepChannel::new(c.group, c.rep, c.snr * m)).collect()
}

fn cmd_phase_diagram(cfg: &RunConfig) -> Result<Outcome> {
    let channels = channels_of(cfg)?;
    if cfg.lambdas.is_empty() {
        return Err(invalid("phase-diagram needs an SNR multiplier grid (--lambda)"));
    }
    let opts = fixed_point_options(cfg);
    let mut cols = vec!["multiplier"];
    cols.extend(SOLUTION_COLUMNS);
    let mut t = table(cfg, &cols);
    let thresholds: Vec<f64> = classifications(cfg, &channels)?.iter().map(|c| c.threshold).collect();
    let mut all = true;
    let mut skipped = 0;
    for &m in &cfg.lambdas {
        if m == 0.0 {
            return Err(invalid("SNR multipliers must be positive"));
        }
        let near = channels.iter().zip(&thresholds).any(|(c, lc)| lc.is_finite() && (m * c.snr / lc - 1.0).abs() < cfg.critical_band);
        if near {
            skipped += 1;
            continue;
        }
        let ch = scaled(&channels, m)?;
        let report = landscape_scan(&ch, cfg.solver.starts, &opts, &cfg.estimator)?;
        all &= report.best.converged;
        push_solution(&mut t, vec![m.into()], &ch, &report.best);
    }
    let summary = format!(
        "{} multipliers x {} channels, {skipped} skipped within {} of a threshold",
        cfg.lambdas.len(),
        channels.len(),
        cfg.critical_band
    );
    Ok(Outcome { summary, table: t, converged: all })
}

/// Reference maximizer for finite-N comparisons: closed form for a single
/// SO(2) harmonic, the landscape scan otherwise.
fn reference_solution(cfg: &RunConfig, channels: &[RepChannel]) -> Result<ReplicaSolution> {
    if let [c] = channels {
        if c.group == GroupSpec::SO2 && c.rep == RepKind::SO2Harmonic(1) {
            return so2_solve(c.snr);
        }
    }
    Ok(landscape_scan(channels, cfg.solver.starts, &fixed_point_options(cfg), &cfg.estimator)?.best)
}

fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let channels = if cfg.channels.is_empty() {
        let lam = cfg.lambdas.first().copied().unwrap_or(1.0);
        vec![RepChannel::so2(1, lam)?]
    } else {
        channels_of(cfg)?
    };
    let sim = &cfg.simulate;
    let reference = reference_solution(cfg, &channels)?;
    let predicted_mmse: f64 = reference.mmse_limits.iter().sum();
    let reports: Vec<_> = (0..sim.seeds)
        .into_par_iter()
        .map(|s| {
            let inst_seed = mix(cfg.estimator.seed ^ mix(s as u64));
            let inst = generate_sync(sim.n, &channels, inst_seed)?;
            let mut chain = GibbsChain::new(&inst, derive(inst_seed, tag::CHAIN))?;
            let r = measure(&inst, &mut chain, sim.burn_in, sim.samples, sim.thinning, Some(&reference.q_star))?;
            Ok((inst_seed, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = table(
        cfg,
        &[
            "replicate",
            "instance_seed",
            "n",
            "overlap_sq",
            "orbit_distance",
            "matrix_mmse",
            "predicted_mmse",
            "nishimori_gap",
            "mean_hamiltonian",
            "mean_hamiltonian_stderr",
            "acceptance_rate",
        ],
    );
    let mut dist = Vec::new();
    for (i, (seed, r)) in reports.iter().enumerate() {
        let mmse: f64 = r.matrix_mmse_per_channel.iter().sum();
        let d = r.orbit_distance.unwrap_or(f64::NAN);
        dist.push(d);
        t.push(vec![
            i.into(),
            seed.to_string().into(),
            sim.n.into(),
            r.overlap_sq.into(),
            d.into(),
            mmse.into(),
            predicted_mmse.into(),
            r.nishimori_gap.into(),
            r.mean_hamiltonian.value.into(),
            r.mean_hamiltonian.stderr.into(),
            r.acceptance_rate.into(),
        ]);
    }
    let within = dist.iter().filter(|d| **d <= 0.1).count();
    Ok(Outcome {
        summary: format!("{} replicates at n={}, orbit distance <= 0.1 in {within}", sim.seeds, sim.n),
        table: t,
        converged: reference.converged,
    })
}

fn cmd_exact_fe(cfg: &RunConfig) -> Result<Outcome> {
    let channels = channels_of(cfg)?;
    if !channels[0].group.is_finite() {
        return Err(invalid("exact-fe needs a finite group"));
    }
    let reference = landscape_scan(&channels, cfg.solver.starts, &fixed_point_options(cfg), &cfg.estimator)?.best;
    let ex = &cfg.exact;
    let opts = ExactOptions::default();
    let mut t = table(cfg, &["n", "draws", "free_energy", "free_energy_stderr", "sup_psi", "gap", "max_nishimori_gap", "matrix_mmse"]);
    let mut last = String::new();
    for &n in &ex.sizes {
        // Draw d uses the same seed at every size, so instances are nested.
        let reports = (0..ex.draws)
            .into_par_iter()
            .map(|d| exact_free_energy_with(&generate_sync(n, &channels, mix(cfg.estimator.seed ^ mix(d as u64)))?, &opts))
            .collect::<Result<Vec<_>>>()?;
        let m = reports.len() as f64;
        let fe: Vec<f64> = reports.iter().map(|r| r.free_energy).collect();
        let mean = fe.iter().sum::<f64>() / m;
        let var = fe.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
        let nish = reports.iter().flat_map(|r| r.nishimori_gap.iter().copied()).fold(0.0, f64::max);
        let mmse = if reports.iter().all(|r| r.matrix_mmse.is_some()) {
            reports.iter().map(|r| r.matrix_mmse.as_ref().unwrap().iter().sum::<f64>()).sum::<f64>() / m
        } else {
            f64::NAN
        };
        let gap = (mean - reference.psi_value).abs();
        t.push(vec![
            n.into(),
            ex.draws.into(),
            mean.into(),
            (var / m).sqrt().into(),
            reference.psi_value.into(),
            gap.into(),
            nish.into(),
            mmse.into(),
        ]);
        last = format!("n={n} free_energy={mean:.6} gap={gap:.6}");
    }
    Ok(Outcome { summary: format!("sup_psi={:.6}, {last}", reference.psi_value), table: t, converged: reference.converged })
}

fn cmd_qa_spectrum(cfg: &RunConfig) -> Result<Outcome> {
    let kernel = kernel_of(cfg)?;
    let rank = *cfg.qa.ranks.last().unwrap();
    let full = mercer_truncate(kernel, rank, cfg.qa.nodes)?;
    let mut t = table(cfg, &["rank", "eigenvalue", "sup_residual", "tail_sum", "trace_residual", "orthonormality_error"]);
    for l in 1..=full.rank {
        let tr = full.truncate(l)?;
        t.push(vec![
            l.into(),
            full.eigenvalues[l - 1].into(),
            tr.residual.into(),
            tr.tail_sum.into(),
            tr.trace_residual.into(),
            tr.orthonormality_error().into(),
        ]);
    }
    Ok(Outcome {
        summary: format!("rank {} of {} requested, residual {:.3e}, K0={:.4}", full.rank, rank, full.residual, kernel.sup_bound()),
        table: t,
        converged: true,
    })
}

fn cmd_qa_solve(cfg: &RunConfig) -> Result<Outcome> {
    let kernel = kernel_of(cfg)?;
    let rank = *cfg.qa.ranks.last().unwrap();
    let trunc = mercer_truncate(kernel, rank, cfg.qa.nodes)?;
    let q0 = nalgebra::DMatrix::from_diagonal_element(trunc.rank, trunc.rank, 0.5 * trunc.eigenvalues[0]);
    let s = qa_solve(&trunc, &q0, &fixed_point_options(cfg), &cfg.estimator)?;
    let mut t = table(cfg, &["rank", "psi", "psi_stderr", "q_frobenius", "converged", "iterations", "residual"]);
    t.push(vec![
        s.rank.into(),
        s.psi_value.into(),
        s.psi_stderr.into(),
        s.q_frobenius.into(),
        s.converged.into(),
        s.iterations.into(),
        s.residual.into(),
    ]);
    Ok(Outcome {
        summary: format!("rank={} psi={:.6} |q*|={:.6} converged={}", s.rank, s.psi_value, s.q_frobenius, s.converged),
        converged: s.converged,
        table: t,
    })
}

fn cmd_qa_mi(cfg: &RunConfig) -> Result<Outcome> {
    let kernel = kernel_of(cfg)?;
    let scales = if cfg.qa.scales.is_empty() { vec![kernel.scale] } else { cfg.qa.scales.clone() };
    let rows = qa_scale_sweep(kernel, &scales, &cfg.qa.ranks, cfg.qa.nodes, &fixed_point_options(cfg), &cfg.estimator)?;
    let mut t = table(cfg, &["L", "lambda_scale", "psi", "q_frob", "mi", "mmse", "cauchy_gap", "converged", "possible_kink"]);
    let mut all = true;
    for r in &rows {
        let s = &r.solution;
        let mut prev: Option<f64> = None;
        for lv in &s.levels {
            all &= lv.converged;
            t.push(vec![
                lv.rank.into(),
                r.scale.into(),
                lv.psi_value.into(),
                lv.q_frobenius.into(),
                (0.25 * s.kappa_sq - lv.psi_value).into(),
                (s.kappa_sq - lv.q_frobenius.powi(2)).into(),
                prev.map(|p| (lv.psi_value - p).abs()).unwrap_or(f64::NAN).into(),
                lv.converged.into(),
                r.possible_kink.into(),
            ]);
            prev = Some(lv.psi_value);
        }
    }
    let last = &rows.last().unwrap().solution;
    Ok(Outcome {
        summary: format!(
            "mi={:.6} mmse={:.6} cauchy_gap={:.3e} reliable={}",
            last.mi_limit, last.mmse_limit, last.cauchy_gap, last.extrapolation_reliable
        ),
        table: t,
        converged: all,
    })
}
