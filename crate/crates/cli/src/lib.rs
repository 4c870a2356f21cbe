//! Command implementations behind the `degshoot` binary.
//!
//! Every command resolves a [`RunConfig`] (flags over file over defaults),
//! writes the effective config to `<out>/config.json`, and returns the
//! process exit code.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use degshoot::radial_ode::Trajectory;
use degshoot::simplex_solver::{solve_zero_traced, RootCertificate, TraceRecord};
use degshoot::systems::build_named;
use degshoot::target_map::{evaluate_psi, SimplexLevel};
use degshoot::verify::{verify_trajectory, VerifyContext};
use degshoot::{
    criticality, integrate_to_exit, Error, ExitOutcome, IntegrationControls, LaneEmdenParams, RadialSystem,
    SolverOptions, VerificationReport,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_UNDETERMINED: u8 = 2;
pub const EXIT_DEPTH_EXHAUSTED: u8 = 3;
pub const EXIT_VERIFY_FAILED: u8 = 4;

/// Which system to build and with what exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSpec {
    /// Registry name: `lane-emden`, `scalar-poly`, `decoupled`, `lane-emden-linear`.
    pub name: String,
    pub n: usize,
    pub k: usize,
    pub p: f64,
    /// Defaults to `p`; ignored by `scalar-poly`.
    pub q: Option<f64>,
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self { name: "lane-emden".into(), n: 3, k: 1, p: 5.0, q: None }
    }
}

impl SystemSpec {
    pub fn params(&self) -> LaneEmdenParams {
        let q = if self.is_scalar() { self.p } else { self.q.unwrap_or(self.p) };
        LaneEmdenParams::new(self.n, self.k, self.p, q)
    }

    fn is_scalar(&self) -> bool {
        self.name == "scalar-poly"
    }

    pub fn build(&self) -> Result<RadialSystem> {
        Ok(build_named(&self.name, &self.params())?)
    }

    /// Params handed to verification when the system has a known energy form.
    fn verify_params(&self) -> Option<(LaneEmdenParams, bool)> {
        match self.name.as_str() {
            "lane-emden" => Some((self.params(), false)),
            "scalar-poly" => Some((self.params(), true)),
            _ => None,
        }
    }
}

/// Everything a command needs. Every field has a default, so `{}` is a
/// valid config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemSpec,
    pub controls: IntegrationControls,
    pub solver: SolverOptions,
    /// Initial value for `shoot` and `verify`.
    pub alpha: Option<Vec<f64>>,
    /// Level of the simplex `A_a` for `solve` and `sweep`.
    pub a: f64,
    /// Grid points per edge of the simplex for `sweep`.
    pub resolution: usize,
    pub out: PathBuf,
    /// Worker threads; unset uses one per core.
    pub workers: Option<usize>,
    /// Midpoints in the residual grid of the verification report.
    pub grid_size: usize,
    /// `solve` and `verify` fail verification when the residual reaches this.
    pub residual_tol: f64,
    /// Upper radius for the closed-form comparison, when one exists.
    pub exact_window: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemSpec::default(),
            controls: IntegrationControls::default(),
            solver: SolverOptions::default(),
            alpha: None,
            a: 1.0,
            resolution: 101,
            out: PathBuf::from("out"),
            workers: None,
            grid_size: 400,
            residual_tol: 1e-5,
            exact_window: 50.0,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "degshoot", version, about = "Radial shooting for positive entire solutions of elliptic systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one initial value to its exit event.
    Shoot(RunArgs),
    /// Locate an initial value on A_a whose target is the barycenter.
    Solve(RunArgs),
    /// Evaluate the target map on a regular grid of A_a.
    Sweep(RunArgs),
    /// Integrate one initial value and report residual, decay and energy checks.
    Verify(RunArgs),
    /// Classify the exponents as sub-, super- or critical.
    Criticality(RunArgs),
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// System name from the registry.
    pub system: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,

    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,

    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    pub alpha: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long)]
    pub resolution: Option<usize>,

    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub h0: Option<f64>,
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long)]
    pub event_tol: Option<f64>,
    #[arg(long)]
    pub decay_eps: Option<f64>,
    #[arg(long)]
    pub flat_eps: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,

    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub psi_tol: Option<f64>,
    #[arg(long)]
    pub diam_tol: Option<f64>,
    #[arg(long)]
    pub max_retries: Option<usize>,
    #[arg(long)]
    pub r_max_growth: Option<f64>,

    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub residual_tol: Option<f64>,
    #[arg(long)]
    pub exact_window: Option<f64>,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
    ($dst:expr, some $src:expr) => {
        if let Some(v) = $src {
            $dst = Some(v);
        }
    };
}

impl RunArgs {
    /// Config file (or defaults) with every given flag applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        set!(cfg.system.name, self.system.clone());
        set!(cfg.system.n, self.n);
        set!(cfg.system.k, self.k);
        set!(cfg.system.p, self.p);
        set!(cfg.system.q, some self.q);
        set!(cfg.out, self.out.clone());
        set!(cfg.workers, some self.workers);
        set!(cfg.alpha, some self.alpha.clone());
        set!(cfg.a, self.a);
        set!(cfg.resolution, self.resolution);

        let c = &mut cfg.controls;
        set!(c.rel_tol, self.rel_tol);
        set!(c.abs_tol, self.abs_tol);
        set!(c.h0, some self.h0);
        set!(c.r_max, self.r_max);
        set!(c.event_tol, self.event_tol);
        set!(c.decay_eps, some self.decay_eps);
        set!(c.flat_eps, self.flat_eps);
        set!(c.max_steps, self.max_steps);

        let s = &mut cfg.solver;
        set!(s.max_depth, some self.max_depth);
        set!(s.psi_tol, some self.psi_tol);
        set!(s.diam_tol, some self.diam_tol);
        set!(s.max_retries, self.max_retries);
        set!(s.r_max_growth, self.r_max_growth);

        set!(cfg.grid_size, self.grid_size);
        set!(cfg.residual_tol, self.residual_tol);
        set!(cfg.exact_window, self.exact_window);

        // the written config names q explicitly so it re-runs unchanged
        cfg.system.q = Some(cfg.system.params().q);
        Ok(cfg)
    }
}

/// Parse-free entry point: resolve the config and dispatch.
pub fn run(cli: Cli) -> Result<u8> {
    let (args, cmd): (&RunArgs, fn(&RunConfig) -> Result<u8>) = match &cli.command {
        Command::Shoot(a) => (a, cmd_shoot),
        Command::Solve(a) => (a, cmd_solve),
        Command::Sweep(a) => (a, cmd_sweep),
        Command::Verify(a) => (a, cmd_verify),
        Command::Criticality(a) => (a, cmd_criticality),
    };
    let cfg = args.resolve()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().context("building worker pool")?;
    pool.install(|| cmd(&cfg))
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    write_json(&cfg.out.join("config.json"), cfg)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    traj.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn require_alpha(cfg: &RunConfig) -> Result<&[f64]> {
    match &cfg.alpha {
        Some(a) => Ok(a),
        None => bail!("an initial value is required (--alpha or \"alpha\" in the config)"),
    }
}

#[derive(Serialize)]
struct OutcomeSummary<'a> {
    system: &'a str,
    alpha: &'a [f64],
    decay_eps: f64,
    r_max: f64,
    nodes: usize,
    #[serde(flatten)]
    outcome: &'a ExitOutcome,
}

fn write_outcome(cfg: &RunConfig, alpha: &[f64], controls: &IntegrationControls, traj: &Trajectory, out: &ExitOutcome) -> Result<()> {
    let summary = OutcomeSummary {
        system: &cfg.system.name,
        alpha,
        decay_eps: controls.resolved_decay_eps(alpha),
        r_max: controls.r_max,
        nodes: traj.samples().len(),
        outcome: out,
    };
    write_json(&cfg.out.join("outcome.json"), &summary)
}

fn describe(out: &ExitOutcome) -> String {
    match out {
        ExitOutcome::WallHit { r0, i0, .. } => format!("WallHit: component {} at r0 = {r0:e}", i0 + 1),
        ExitOutcome::GlobalCandidate { r_end, state } => format!("GlobalCandidate at r = {r_end:e}, u = {state:?}"),
        ExitOutcome::Undetermined { r_end, state, flat } => {
            format!("Undetermined at r = {r_end:e}, u = {state:?}, flat = {flat}")
        }
    }
}

pub fn cmd_shoot(cfg: &RunConfig) -> Result<u8> {
    let system = cfg.system.build()?;
    let alpha = require_alpha(cfg)?;
    prepare_out(cfg)?;
    let (traj, out) = integrate_to_exit(&system, alpha, &cfg.controls)?;
    write_trajectory(&cfg.out.join("trajectory.csv"), &traj)?;
    write_outcome(cfg, alpha, &cfg.controls, &traj, &out)?;
    println!("{}", describe(&out));
    Ok(match out {
        ExitOutcome::Undetermined { .. } => EXIT_UNDETERMINED,
        _ => EXIT_OK,
    })
}

/// Integrate `alpha`, growing `r_max` like the solver does while the outcome
/// stays undetermined.
fn integrate_resolved(
    system: &RadialSystem,
    alpha: &[f64],
    cfg: &RunConfig,
) -> Result<(Trajectory, ExitOutcome, IntegrationControls)> {
    let mut controls = cfg.controls.clone();
    let mut attempt = 0;
    loop {
        let (traj, out) = integrate_to_exit(system, alpha, &controls)?;
        if !matches!(out, ExitOutcome::Undetermined { .. }) || attempt >= cfg.solver.max_retries {
            return Ok((traj, out, controls));
        }
        controls.r_max *= cfg.solver.r_max_growth;
        attempt += 1;
    }
}

fn verification(cfg: &RunConfig, system: &RadialSystem, alpha: &[f64], traj: &Trajectory, abs_tol: f64) -> Result<VerificationReport> {
    let params = cfg.system.verify_params();
    let ctx = VerifyContext {
        system,
        alpha,
        params: params.as_ref().map(|(p, s)| (p, *s)),
        abs_tol,
        grid_size: cfg.grid_size,
        exact_window: cfg.exact_window,
    };
    Ok(verify_trajectory(traj, &ctx)?)
}

fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for rec in trace {
        serde_json::to_writer(&mut w, rec)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<u8> {
    let system = cfg.system.build()?;
    let level = SimplexLevel::new(cfg.a, system.dim())?;
    prepare_out(cfg)?;
    let mut trace = Vec::new();
    let result = solve_zero_traced(&system, &level, &cfg.controls, &cfg.solver, &mut trace);
    write_trace(&cfg.out.join("trace.jsonl"), &trace)?;
    let cert: RootCertificate = match result {
        Ok(c) => c,
        Err(Error::DepthExhausted { depth, best }) => {
            write_json(&cfg.out.join("certificate.json"), &*best)?;
            eprintln!("depth budget exhausted at depth {depth}; best-effort certificate written");
            return Ok(EXIT_DEPTH_EXHAUSTED);
        }
        Err(e) => return Err(e.into()),
    };
    write_json(&cfg.out.join("certificate.json"), &cert)?;

    let (traj, out, controls) = integrate_resolved(&system, &cert.alpha_star, cfg)?;
    write_trajectory(&cfg.out.join("trajectory.csv"), &traj)?;
    write_outcome(cfg, &cert.alpha_star, &controls, &traj, &out)?;
    let report = verification(cfg, &system, &cert.alpha_star, &traj, controls.abs_tol)?;
    write_json(&cfg.out.join("verify.json"), &report)?;

    println!(
        "alpha* = {:?}  |psi| = {:e}  diameter = {:e}  ({:?}, {} evaluations)",
        cert.alpha_star, cert.psi_norm, cert.diameter, cert.termination, cert.evaluations
    );
    println!("certified trajectory: {}; residual = {:e}", describe(&out), report.residual_max);
    Ok(if report.residual_max < cfg.residual_tol { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<u8> {
    let system = cfg.system.build()?;
    let alpha = require_alpha(cfg)?;
    prepare_out(cfg)?;
    let (traj, out, controls) = integrate_resolved(&system, alpha, cfg)?;
    write_trajectory(&cfg.out.join("trajectory.csv"), &traj)?;
    write_outcome(cfg, alpha, &controls, &traj, &out)?;
    let report = verification(cfg, &system, alpha, &traj, controls.abs_tol)?;
    write_json(&cfg.out.join("verify.json"), &report)?;
    println!("{}; residual = {:e}; monotone = {}", describe(&out), report.residual_max, report.monotonic);
    Ok(if report.residual_max < cfg.residual_tol && report.monotonic { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

/// Grid of `A_a` with `resolution` points per edge, lexicographic in the
/// integer coordinates, so rows come out ordered by the first component.
pub fn simplex_grid(a: f64, l: usize, resolution: usize) -> Result<Vec<Vec<f64>>> {
    if resolution < 2 {
        bail!("resolution must be >= 2, got {resolution}");
    }
    let m = resolution - 1;
    let mut out = Vec::new();
    let mut counts = vec![0usize; l];
    fn rec(i: usize, left: usize, m: usize, a: f64, counts: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        let l = counts.len();
        if i == l - 1 {
            counts[i] = left;
            out.push(counts.iter().map(|&c| a * c as f64 / m as f64).collect());
            return;
        }
        for c in 0..=left {
            counts[i] = c;
            rec(i + 1, left - c, m, a, counts, out);
        }
    }
    rec(0, m, m, a, &mut counts, &mut out);
    Ok(out)
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<u8> {
    let system = cfg.system.build()?;
    let level = SimplexLevel::new(cfg.a, system.dim())?;
    let grid = simplex_grid(level.a, level.l, cfg.resolution)?;
    prepare_out(cfg)?;
    let rows: Vec<_> = grid
        .par_iter()
        .map(|alpha| evaluate_psi(&system, alpha, &cfg.controls))
        .collect::<std::result::Result<_, _>>()?;

    let path = cfg.out.join("sweep.csv");
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    let l = level.l;
    let mut header: Vec<String> = (1..=l).map(|i| format!("alpha{i}")).collect();
    header.extend(["outcome".into(), "i0".into(), "r0".into()]);
    header.extend((1..=l).map(|i| format!("psi{i}")));
    writeln!(w, "{}", header.join(","))?;
    let mut counts = [0usize; 3];
    for (alpha, t) in grid.iter().zip(&rows) {
        let (i0, r0) = match &t.outcome {
            ExitOutcome::WallHit { i0, r0, .. } => (*i0 as i64, *r0),
            _ => (-1, -1.0),
        };
        counts[match t.outcome {
            ExitOutcome::WallHit { .. } => 0,
            ExitOutcome::GlobalCandidate { .. } => 1,
            ExitOutcome::Undetermined { .. } => 2,
        }] += 1;
        for x in alpha {
            write!(w, "{x:.16e},")?;
        }
        write!(w, "{},{i0},{r0:.16e}", t.outcome.kind())?;
        for x in &t.value {
            write!(w, ",{x:.16e}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    println!(
        "{} points: {} WallHit, {} GlobalCandidate, {} Undetermined",
        grid.len(),
        counts[0],
        counts[1],
        counts[2]
    );
    Ok(EXIT_OK)
}

pub fn cmd_criticality(cfg: &RunConfig) -> Result<u8> {
    let report = criticality(&cfg.system.params())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(EXIT_OK)
}
