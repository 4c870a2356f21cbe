//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when any
//! criterion fails. Criteria 1, 3, 4 and 5 drive the built binary; the rest
//! call the library directly.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use anyhow::{anyhow, ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use degshoot::numeric::{compensated_sum, dist_inf};
use degshoot::simplex_solver::{full_labeling, sperner_label};
use degshoot::systems::{
    check_nondegenerate, decoupled_system, lane_emden_linear_system, lane_emden_system, scalar_polyharmonic_system,
    LaneEmdenParams,
};
use degshoot::target_map::{phi, phi_inverse, SimplexLevel};
use degshoot::verify::{energy_estimate, scaling_check};
use degshoot::{integrate_to_exit, ExitOutcome, IntegrationControls, SolverOptions};

/// Closed-form solution of `-Δu = u^5` in `R^3` with `u(0) = 1`.
fn bubble(r: f64) -> f64 {
    (1.0 + r * r / 3.0).powf(-0.5)
}

/// Root of the critical biharmonic problem on `A_1` from a 1-D bisection run
/// recorded before the solver existed.
const BIHARMONIC_ROOT: f64 = 0.8195706190048506;

/// A trajectory as nodes `(r, u, u')`, kept for the monotonicity criterion.
struct Nodes {
    label: String,
    n: usize,
    abs_tol: f64,
    rows: Vec<(f64, Vec<f64>, Vec<f64>)>,
}

impl Nodes {
    fn from_csv(label: &str, path: &Path, n: usize, abs_tol: f64) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| anyhow!("empty {}", path.display()))?;
        let l = (header.split(',').count() - 1) / 2;
        let mut rows = Vec::new();
        for line in lines {
            let v: Vec<f64> = line.split(',').map(str::parse).collect::<std::result::Result<_, _>>()?;
            rows.push((v[0], v[1..=l].to_vec(), v[l + 1..].to_vec()));
        }
        Ok(Self { label: label.into(), n, abs_tol, rows })
    }

    fn from_traj(label: String, t: &degshoot::Trajectory, abs_tol: f64) -> Self {
        let rows = t.samples().iter().map(|s| (s.r, s.u.clone(), s.du.clone())).collect();
        Self { label, n: t.space_dim(), abs_tol, rows }
    }

    /// Worst rise of `u_i` and of `r^(n-1) u_i'` (in `u'` units) over their
    /// running minima.
    fn drifts(&self) -> (f64, f64) {
        let l = self.rows[0].1.len();
        let (mut mono, mut flux) = (0.0f64, 0.0f64);
        for i in 0..l {
            let (mut min_u, mut min_f) = (f64::INFINITY, f64::INFINITY);
            for (r, u, du) in &self.rows {
                mono = mono.max(u[i] - min_u);
                min_u = min_u.min(u[i]);
                let w = r.powi(self.n as i32 - 1);
                let f = w * du[i];
                if w > 0.0 {
                    flux = flux.max((f - min_f) / w);
                }
                min_f = min_f.min(f);
            }
        }
        (mono, flux)
    }
}

struct Harness {
    bin: PathBuf,
    dir: tempfile::TempDir,
    nodes: Vec<Nodes>,
}

impl Harness {
    fn run(&self, out: &str, args: &[&str]) -> Result<(i32, Duration, PathBuf)> {
        let dir = self.dir.path().join(out);
        let start = Instant::now();
        let status = Command::new(&self.bin)
            .args(args)
            .arg("--out")
            .arg(&dir)
            .output()
            .context("spawning degshoot")?;
        let elapsed = start.elapsed();
        let code = status.status.code().unwrap_or(-1);
        Ok((code, elapsed, dir))
    }
}

fn json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    Ok(serde_json::from_str(&text)?)
}

fn floats(v: &Value) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| anyhow!("expected array, got {v}"))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| anyhow!("expected number, got {x}")))
        .collect()
}

fn within(elapsed: Duration, limit: f64) -> Result<()> {
    ensure!(elapsed.as_secs_f64() <= limit, "took {:.2}s, limit {limit}s", elapsed.as_secs_f64());
    Ok(())
}

fn bubble_error(nodes: &Nodes, scale: f64, r_hi: f64) -> f64 {
    // u(0) = alpha is exact; the stored nodes start at the seed radius
    let mut worst = 0.0f64;
    for (r, u, _) in nodes.rows.iter().filter(|row| row.0 <= r_hi) {
        for ui in u {
            worst = worst.max((ui - scale * bubble(*r)).abs());
        }
    }
    worst
}

fn c1_critical_scalar(h: &mut Harness) -> Result<String> {
    let (code, elapsed, dir) =
        h.run("c1", &["shoot", "scalar-poly", "--n", "3", "--k", "1", "--p", "5", "--alpha", "1", "--rel-tol", "1e-9", "--r-max", "100"])?;
    ensure!(code == 0, "exit code {code}");
    let out = json(&dir.join("outcome.json"))?;
    ensure!(out["kind"] == "GlobalCandidate", "outcome {}", out["kind"]);
    let nodes = Nodes::from_csv("criterion 1", &dir.join("trajectory.csv"), 3, 1e-14)?;
    let err = bubble_error(&nodes, 1.0, 50.0);
    ensure!(err <= 1e-6, "bubble error {err:e}");

    // the same run between the nodes
    let sys = scalar_polyharmonic_system(3, 1, 5.0)?;
    let c = IntegrationControls { rel_tol: 1e-9, r_max: 100.0, ..Default::default() };
    let (traj, _) = integrate_to_exit(&sys, &[1.0], &c)?;
    let mut dense = 0.0f64;
    for i in 0..=5000 {
        let r = (traj.r_start() + (50.0 - traj.r_start()) * i as f64 / 5000.0).min(50.0);
        dense = dense.max((traj.sample_state(r)?.0[0] - bubble(r)).abs());
    }
    ensure!(dense <= 1e-6, "interpolated bubble error {dense:e}");
    h.nodes.push(nodes);
    within(elapsed, 1.0)?;
    Ok(format!("node error {err:.2e}, dense error {dense:.2e}, {:.2}s", elapsed.as_secs_f64()))
}

fn c2_subcritical_scaling(h: &mut Harness) -> Result<String> {
    let start = Instant::now();
    let sys = scalar_polyharmonic_system(3, 1, 3.0)?;
    let c = IntegrationControls::default();
    let alphas = [0.5, 1.0, 2.0, 4.0];
    for &a in &alphas {
        let (traj, out) = integrate_to_exit(&sys, &[a], &c)?;
        let ExitOutcome::WallHit { r0, dstate, .. } = &out else { return Err(anyhow!("alpha {a}: {}", out.kind())) };
        ensure!(r0.is_finite() && *r0 > 0.0, "alpha {a}: r0 = {r0}");
        ensure!(dstate[0] < 0.0, "alpha {a}: u'(r0) = {}", dstate[0]);
        h.nodes.push(Nodes::from_traj(format!("criterion 2, alpha {a}"), &traj, c.abs_tol));
    }
    let rep = scaling_check(3, 3.0, &alphas, &c)?;
    ensure!(rep.spread < 1e-4, "spread {:e}", rep.spread);
    let elapsed = start.elapsed();
    within(elapsed, 1.0)?;
    Ok(format!("r0*alpha = {:.10}, spread {:.1e}, {:.2}s", rep.products[1], rep.spread, elapsed.as_secs_f64()))
}

fn c3_critical_biharmonic(h: &mut Harness) -> Result<String> {
    let (code, elapsed, dir) = h.run("c3", &["solve", "scalar-poly", "--n", "5", "--k", "2", "--p", "9", "--a", "1"])?;
    ensure!(code == 0, "exit code {code}");
    let cert = json(&dir.join("certificate.json"))?;
    let alpha = floats(&cert["alpha_star"])?;
    let psi = cert["psi_norm"].as_f64().unwrap_or(f64::NAN);
    ensure!(psi < 1e-4, "|psi(alpha*)| = {psi:e}");
    ensure!((alpha[0] - BIHARMONIC_ROOT).abs() < 1e-6, "alpha* = {alpha:?}");
    let out = json(&dir.join("outcome.json"))?;
    ensure!(out["kind"] == "GlobalCandidate", "certified outcome {}", out["kind"]);
    let ver = json(&dir.join("verify.json"))?;
    let residual = ver["residual_max"].as_f64().unwrap_or(f64::NAN);
    ensure!(residual < 1e-5, "residual {residual:e}");
    let slopes = floats(&ver["decay_fit"])?;
    ensure!(!slopes.is_empty() && slopes.iter().all(|&s| s < 0.0), "decay slopes {slopes:?}");

    // labels of points just off α* along the edge
    let sys = scalar_polyharmonic_system(5, 2, 9.0)?;
    let level = SimplexLevel::new(1.0, 2)?;
    let opts = SolverOptions::default().resolve(&level)?;
    let c = IntegrationControls::default();
    let d = 1e-3;
    let left = sperner_label(&sys, &[alpha[0] - d, alpha[1] + d], &level, &c, &opts)?;
    let right = sperner_label(&sys, &[alpha[0] + d, alpha[1] - d], &level, &c, &opts)?;
    ensure!(left != right, "labels {left:?} / {right:?}");
    h.nodes.push(Nodes::from_csv("criterion 3", &dir.join("trajectory.csv"), 5, 1e-14)?);
    within(elapsed, 30.0)?;
    Ok(format!(
        "alpha*_1 = {:.12}, |psi| {psi:.1e}, residual {residual:.1e}, labels {left:?}|{right:?}, {:.2}s",
        alpha[0],
        elapsed.as_secs_f64()
    ))
}

fn c4_subthreshold_sweep(h: &mut Harness) -> Result<String> {
    let (code, elapsed, dir) =
        h.run("c4", &["sweep", "scalar-poly", "--n", "5", "--k", "2", "--p", "8", "--a", "1", "--resolution", "101"])?;
    ensure!(code == 0, "exit code {code}");
    let text = fs::read_to_string(dir.join("sweep.csv"))?;
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    ensure!(rows.len() == 101, "{} rows", rows.len());
    let mut last = f64::NEG_INFINITY;
    for (i, row) in rows.iter().enumerate() {
        let a1: f64 = row[0].parse()?;
        ensure!(a1 > last, "rows not ordered by alpha1 at {i}");
        last = a1;
        ensure!(row[2] == "WallHit", "row {i}: {}", row[2]);
        if i == 0 || i == 100 {
            ensure!(row[4].parse::<f64>()? == 0.0, "boundary row {i} r0 = {}", row[4]);
        }
    }
    // trajectories behind the interior points, for the monotonicity criterion
    let sys = scalar_polyharmonic_system(5, 2, 8.0)?;
    let c = IntegrationControls::default();
    for row in &rows[1..100] {
        let alpha = [row[0].parse()?, row[1].parse()?];
        let (traj, _) = integrate_to_exit(&sys, &alpha, &c)?;
        h.nodes.push(Nodes::from_traj(format!("criterion 4, alpha {alpha:?}"), &traj, c.abs_tol));
    }
    within(elapsed, 60.0)?;
    Ok(format!("99/99 interior WallHit, {:.2}s", elapsed.as_secs_f64()))
}

fn c5_lane_emden_symmetry(h: &mut Harness) -> Result<String> {
    let (code, elapsed, dir) =
        h.run("c5", &["solve", "lane-emden", "--n", "3", "--k", "1", "--p", "5", "--q", "5", "--a", "2"])?;
    ensure!(code == 0, "exit code {code}");
    let cert = json(&dir.join("certificate.json"))?;
    let alpha = floats(&cert["alpha_star"])?;
    let off = dist_inf(&alpha, &[1.0, 1.0]);
    ensure!(off < 1e-4, "alpha* = {alpha:?}");
    let nodes = Nodes::from_csv("criterion 5", &dir.join("trajectory.csv"), 3, 1e-14)?;
    let err = bubble_error(&nodes, alpha[0], 50.0).max(bubble_error(&nodes, alpha[1], 50.0));
    let asym = nodes.rows.iter().map(|(_, u, _)| (u[0] - u[1]).abs()).fold(0.0, f64::max);
    ensure!(err <= 1e-6, "bubble error {err:e}");
    ensure!(asym <= 1e-6, "u - v = {asym:e}");
    h.nodes.push(nodes);
    within(elapsed, 30.0)?;
    Ok(format!("|alpha* - (1,1)| = {off:.1e}, bubble error {err:.1e}, {:.2}s", elapsed.as_secs_f64()))
}

fn c6_sperner_parity(_: &mut Harness) -> Result<String> {
    let start = Instant::now();
    let sys = lane_emden_linear_system(3, 5.0, 5.0)?;
    let level = SimplexLevel::new(1.0, 3)?;
    let mut counts = Vec::new();
    for depth in 1..=3 {
        let s = full_labeling(&sys, &level, &IntegrationControls::default(), &SolverOptions::default(), depth)?;
        ensure!(s.boundary_vertices > 0, "depth {depth}: no boundary vertices");
        ensure!(s.sperner_violations.is_empty(), "depth {depth}: {:?}", s.sperner_violations);
        ensure!(s.completely_labeled % 2 == 1, "depth {depth}: {} completely labeled", s.completely_labeled);
        counts.push(s.completely_labeled);
    }
    let elapsed = start.elapsed();
    within(elapsed, 120.0)?;
    Ok(format!("completely labeled per depth {counts:?}, {:.2}s", elapsed.as_secs_f64()))
}

fn c7_phi_round_trips(_: &mut Harness) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cases = Vec::with_capacity(2000);
    for _ in 0..1000 {
        let l = rng.gen_range(2..=5);
        let a: f64 = rng.gen_range(0.1..10.0);
        let mut w: Vec<f64> = (0..l).map(|_| rng.gen_range(0.0..1.0)).collect();
        w[rng.gen_range(0..l)] = 0.0;
        let s: f64 = w.iter().sum();
        let beta: Vec<f64> = w.iter().map(|x| x / s * a * 0.999).collect();
        let mut alpha: Vec<f64> = (0..l).map(|_| rng.gen_range(1e-3..1.0)).collect();
        let s: f64 = alpha.iter().sum();
        alpha.iter_mut().for_each(|x| *x *= a / s);
        alpha[0] -= compensated_sum(&alpha) - a;
        cases.push((a, beta, alpha));
    }
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (a, beta, alpha) in &cases {
        let level = SimplexLevel::new(*a, beta.len())?;
        let b = dist_inf(&phi_inverse(&phi(beta, &level)?), beta) / (f64::EPSILON * a);
        let f = dist_inf(&phi(&phi_inverse(alpha), &level)?, alpha) / (f64::EPSILON * a);
        worst = worst.max(b).max(f);
    }
    let elapsed = start.elapsed();
    ensure!(worst <= 4.0, "worst round-trip error {worst} eps*a");
    within(elapsed, 0.1)?;
    Ok(format!("2000 round trips, worst {worst:.1} eps*a, {:.4}s", elapsed.as_secs_f64()))
}

fn c8_monotone_flux(h: &mut Harness) -> Result<String> {
    ensure!(!h.nodes.is_empty(), "no trajectories collected");
    let (mut mono, mut flux) = (0.0f64, 0.0f64);
    for t in &h.nodes {
        let (m, f) = t.drifts();
        let lim = 10.0 * t.abs_tol;
        ensure!(m <= lim && f <= lim, "{}: monotone drift {m:e}, flux drift {f:e}", t.label);
        mono = mono.max(m);
        flux = flux.max(f);
    }
    Ok(format!("{} trajectories, worst drift {mono:.1e} / {flux:.1e}", h.nodes.len()))
}

fn c9_energy(_: &mut Harness) -> Result<String> {
    let start = Instant::now();
    let radii = [10.0, 100.0, 1000.0];
    let params = LaneEmdenParams::new(3, 1, 7.0, 7.0);
    let sys = lane_emden_system(params)?;
    let c = IntegrationControls { r_max: 1e6, ..Default::default() };
    let (traj, out) = integrate_to_exit(&sys, &[1.0, 1.0], &c)?;
    ensure!(out.is_global(), "supercritical run: {}", out.kind());
    let e = energy_estimate(&traj, &params, &radii)?;
    let sup: Vec<f64> = e.windows(2).map(|w| w[1].u_integral / w[0].u_integral).collect();
    ensure!(sup.iter().all(|&r| r > 1.05), "supercritical ratios {sup:?}");

    // criterion 1's run, carried to the largest radius
    let params = LaneEmdenParams::scalar(3, 1, 5.0);
    let sys = scalar_polyharmonic_system(3, 1, 5.0)?;
    let c = IntegrationControls { rel_tol: 1e-9, r_max: 1e3, ..Default::default() };
    let (traj, _) = integrate_to_exit(&sys, &[1.0], &c)?;
    let e = energy_estimate(&traj, &params, &radii)?;
    let crit: Vec<f64> = e.windows(2).map(|w| w[1].u_integral / w[0].u_integral).collect();
    ensure!(crit[1] < 1.01, "critical ratios {crit:?}");
    // ∫₀^∞ (1 + r²/3)^(-3) r² dr; the tail past 10³ is below 1e-8
    let closed = 3.0 * 3f64.sqrt() * std::f64::consts::PI / 16.0;
    ensure!((e[2].u_integral - closed).abs() < 1e-5, "critical energy {} vs {closed}", e[2].u_integral);
    let elapsed = start.elapsed();
    within(elapsed, 10.0)?;
    Ok(format!("supercritical ratios {sup:.3?}, critical ratios {crit:.6?}, {:.2}s", elapsed.as_secs_f64()))
}

fn c10_nondegeneracy(_: &mut Harness) -> Result<String> {
    let start = Instant::now();
    let builders = [
        lane_emden_system(LaneEmdenParams::new(3, 1, 5.0, 5.0))?,
        lane_emden_system(LaneEmdenParams::new(3, 1, 2.0, 7.0))?,
        lane_emden_system(LaneEmdenParams::new(5, 2, 9.0, 9.0))?,
        lane_emden_system(LaneEmdenParams::new(7, 3, 3.0, 4.0))?,
        scalar_polyharmonic_system(5, 2, 9.0)?,
        scalar_polyharmonic_system(9, 4, 5.0)?,
        lane_emden_linear_system(3, 5.0, 5.0)?,
    ];
    let mut strata = 0;
    for sys in &builders {
        let rep = check_nondegenerate(sys, 10_000, 11);
        ensure!(rep.is_clean(), "{}: {} violations", sys.name(), rep.violations.len());
        strata += rep.strata;
    }
    let dec = check_nondegenerate(&decoupled_system(3, 5.0)?, 10_000, 11);
    ensure!(!dec.violations.is_empty(), "decoupled system not flagged");
    let elapsed = start.elapsed();
    within(elapsed, 5.0)?;
    Ok(format!(
        "{} builders, {strata} strata clean; decoupled flagged {} times, {:.2}s",
        builders.len(),
        dec.violations.len(),
        elapsed.as_secs_f64()
    ))
}

type Criterion = (u32, &'static str, fn(&mut Harness) -> Result<String>);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "critical scalar k=1 matches the bubble", c1_critical_scalar),
        (2, "subcritical wall hits obey the scaling law", c2_subcritical_scaling),
        (3, "critical biharmonic root certificate", c3_critical_biharmonic),
        (4, "sub-threshold biharmonic sweep hits the wall", c4_subthreshold_sweep),
        (5, "Lane-Emden symmetric root", c5_lane_emden_symmetry),
        (6, "Sperner condition and parity, L=3", c6_sperner_parity),
        (7, "phi / phi^-1 round trips", c7_phi_round_trips),
        (8, "monotone u and flux on criteria 1-5", c8_monotone_flux),
        (9, "energy growth vs saturation", c9_energy),
        (10, "non-degeneracy detector", c10_nondegeneracy),
    ];
    let mut h = Harness {
        bin: PathBuf::from(env!("CARGO_BIN_EXE_degshoot")),
        dir: tempfile::tempdir().expect("temp dir"),
        nodes: Vec::new(),
    };
    let mut failed = 0;
    for (id, name, check) in criteria {
        match check(&mut h) {
            Ok(detail) => println!("[PASS] {id:>2} {name}: {detail}"),
            Err(e) => {
                failed += 1;
                println!("[FAIL] {id:>2} {name}: {e:#}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
