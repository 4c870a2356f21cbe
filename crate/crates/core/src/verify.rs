//! After-the-fact checks on integrated trajectories: equation residuals,
//! decay rates, scaling invariance, closed-form comparisons and energy
//! partial integrals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dist_inf, logspace};
use crate::radial_ode::{integrate_to_exit, ExitOutcome, IntegrationControls, Trajectory};
use crate::systems::{scalar_polyharmonic_system, LaneEmdenParams, RadialSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub residual_max: f64,
    pub decay_fit: Vec<f64>,
    pub monotonic: bool,
    pub exact_error: Option<f64>,
    pub energy_partial: Vec<f64>,
}

/// Residual from the dense-output derivative and its finite-difference cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualCheck {
    pub residual_max: f64,
    /// Same residual with `u''` from central differences of `u'` at 10 radii.
    pub fd_residual_max: f64,
    /// Largest `|u''_dense − u''_fd|` at those radii.
    pub fd_discrepancy: f64,
}

fn residual_at(
    system: &RadialSystem,
    n: usize,
    r: f64,
    u: &[f64],
    du: &[f64],
    d2u: &[f64],
    fbuf: &mut [f64],
) -> f64 {
    let upos: Vec<f64> = u.iter().map(|x| x.max(0.0)).collect();
    system.eval_into(&upos, fbuf);
    let c = (n - 1) as f64 / r;
    (0..u.len()).map(|i| (d2u[i] + c * du[i] + fbuf[i]).abs()).fold(0.0, f64::max)
}

/// Log-spaced cell midpoints on `(lo, hi)`, moved off stored nodes.
fn check_grid(traj: &Trajectory, lo: f64, hi: f64, size: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let nodes = traj.samples();
    (0..size)
        .map(|i| {
            let mut r = (a + (b - a) * (i as f64 + 0.5) / size as f64).exp();
            if nodes.binary_search_by(|s| s.r.total_cmp(&r)).is_ok() {
                r *= 1.0 + 1e-7;
            }
            r.clamp(lo, hi)
        })
        .collect()
}

pub fn residual_check(traj: &Trajectory, system: &RadialSystem, grid_size: usize) -> Result<ResidualCheck> {
    let (lo, hi) = (traj.r_start(), traj.r_end());
    if !(lo > 0.0 && hi > lo) || grid_size == 0 {
        return Err(Error::OutOfRange { r: lo, lo, hi });
    }
    let n = traj.space_dim();
    let mut fbuf = vec![0.0; traj.dim()];
    let mut residual_max = 0.0f64;
    for r in check_grid(traj, lo, hi, grid_size) {
        let (u, du) = traj.sample_state(r)?;
        let d2u = traj.second_derivative(r)?;
        residual_max = residual_max.max(residual_at(system, n, r, &u, &du, &d2u, &mut fbuf));
    }

    let mut fd_residual_max = 0.0f64;
    let mut fd_discrepancy = 0.0f64;
    for r in check_grid(traj, lo * 1.01, hi / 1.01, 10) {
        let h = 1e-4 * r;
        let (_, dp) = traj.sample_state(r + h)?;
        let (_, dm) = traj.sample_state(r - h)?;
        let fd: Vec<f64> = dp.iter().zip(&dm).map(|(p, m)| (p - m) / (2.0 * h)).collect();
        let (u, du) = traj.sample_state(r)?;
        let d2u = traj.second_derivative(r)?;
        fd_residual_max = fd_residual_max.max(residual_at(system, n, r, &u, &du, &fd, &mut fbuf));
        fd_discrepancy = fd_discrepancy.max(dist_inf(&fd, &d2u));
    }
    Ok(ResidualCheck { residual_max, fd_residual_max, fd_discrepancy })
}

/// Max-norm residual of the radial equation over `grid_size` log-spaced radii.
pub fn residual_norm(traj: &Trajectory, system: &RadialSystem, grid_size: usize) -> Result<f64> {
    Ok(residual_check(traj, system, grid_size)?.residual_max)
}

/// The critical second-order solution normalized to 1 at the origin.
pub fn exact_bubble(n: usize, r: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidParams(format!("bubble needs n >= 3, got {n}")));
    }
    let nf = n as f64;
    Ok((1.0 + r * r / (nf * (nf - 2.0))).powf(-(nf - 2.0) / 2.0))
}

/// Closed-form radial solutions available for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExactSolution {
    /// `amp · B(amp^(2/(n-2)) r)` in every one of `copies` components, `B` the bubble.
    Bubble { n: usize, amp: f64, copies: usize },
    /// Fourth-order critical solution in five dimensions, in the reduced
    /// variables `(u, -Δu)`, dilated by `lambda`.
    Biharmonic5 { lambda: f64 },
}

/// `C` with `C^8 = 105`: the amplitude at which `u = C (1 + r²)^(-1/2)`
/// solves `Δ²u = u^9` in five dimensions.
pub fn biharmonic5_amplitude() -> f64 {
    105f64.powf(0.125)
}

impl ExactSolution {
    /// Picks the closed form matching `params` and `alpha`, if one exists.
    ///
    /// `scalar` selects the single-equation reduction (length `k`) rather than
    /// the coupled system (length `2k`).
    pub fn for_params(params: &LaneEmdenParams, scalar: bool, alpha: &[f64]) -> Option<Self> {
        let n = params.n;
        let crit_k1 = (n as f64 + 2.0) / (n as f64 - 2.0);
        if params.k == 1 && n >= 3 && params.p == crit_k1 && params.q == crit_k1 {
            let amp = alpha[0];
            let all_equal = alpha.iter().all(|&a| a == amp);
            return all_equal.then_some(ExactSolution::Bubble { n, amp, copies: alpha.len() });
        }
        if scalar && params.k == 2 && n == 5 && params.p == 9.0 && alpha.len() == 2 {
            let lambda = (alpha[0] / biharmonic5_amplitude()).powi(2);
            return Some(ExactSolution::Biharmonic5 { lambda });
        }
        None
    }

    pub fn eval(&self, r: f64) -> Vec<f64> {
        match *self {
            ExactSolution::Bubble { n, amp, copies } => {
                let s = amp.powf(2.0 / (n as f64 - 2.0));
                let v = amp * exact_bubble(n, s * r).expect("n >= 3 checked on construction");
                vec![v; copies]
            }
            ExactSolution::Biharmonic5 { lambda } => {
                let c = biharmonic5_amplitude();
                let s2 = (lambda * r).powi(2);
                let w1 = c * lambda.sqrt() * (1.0 + s2).powf(-0.5);
                let w2 = c * lambda.powf(2.5) * (5.0 + 2.0 * s2) * (1.0 + s2).powf(-2.5);
                vec![w1, w2]
            }
        }
    }
}

/// Max-norm deviation from `exact` over `[0, r_hi]` (clipped to the trajectory),
/// at every stored node plus three interpolated points per step.
pub fn exact_error(traj: &Trajectory, alpha: &[f64], exact: &ExactSolution, r_hi: f64) -> Result<f64> {
    let mut err = dist_inf(alpha, &exact.eval(0.0));
    let hi = r_hi.min(traj.r_end());
    let samples = traj.samples();
    for (j, s) in samples.iter().enumerate() {
        if s.r > hi {
            break;
        }
        err = err.max(dist_inf(&s.u, &exact.eval(s.r)));
        if let Some(next) = samples.get(j + 1) {
            for t in [0.25, 0.5, 0.75] {
                let r = s.r + t * (next.r - s.r);
                if r <= hi {
                    let (u, _) = traj.sample_state(r)?;
                    err = err.max(dist_inf(&u, &exact.eval(r)));
                }
            }
        }
    }
    Ok(err)
}

/// `r0 · α^((p-1)/2)` for each initial value of the scalar second-order problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub alphas: Vec<f64>,
    pub r0: Vec<f64>,
    pub products: Vec<f64>,
    /// `(max − min) / mean` of the products.
    pub spread: f64,
}

pub fn scaling_check(n: usize, p: f64, alphas: &[f64], controls: &IntegrationControls) -> Result<ScalingReport> {
    if p == 1.0 {
        return Err(Error::InvalidParams("scaling law needs p != 1".into()));
    }
    let system = scalar_polyharmonic_system(n, 1, p)?;
    let mut r0s = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let (_, outcome) = integrate_to_exit(&system, &[alpha], controls)?;
        match outcome {
            ExitOutcome::WallHit { r0, .. } if r0 > 0.0 => r0s.push(r0),
            _ => return Err(Error::NoWallHit { alpha }),
        }
    }
    let products: Vec<f64> = alphas.iter().zip(&r0s).map(|(a, r)| r * a.powf((p - 1.0) / 2.0)).collect();
    let max = products.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = products.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = products.iter().sum::<f64>() / products.len() as f64;
    Ok(ScalingReport { alphas: alphas.to_vec(), r0: r0s, products, spread: (max - min) / mean })
}

/// Partial energies `∫₀^R u^(q+1) r^(n-1) dr` and `∫₀^R v^(p+1) r^(n-1) dr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyPartial {
    pub radius: f64,
    pub u_integral: f64,
    pub v_integral: f64,
}

const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_1,
];

/// Energy partials on a Lane-Emden trajectory, five-point Gauss on each
/// integrator step. `u` is component 0; `v` is component `k` for the coupled
/// system and `u` itself for the scalar reduction.
pub fn energy_estimate(traj: &Trajectory, params: &LaneEmdenParams, radii: &[f64]) -> Result<Vec<EnergyPartial>> {
    let l = traj.dim();
    let v_idx = if l == 2 * params.k { params.k } else { 0 };
    let n = traj.space_dim() as i32;
    let (eu, ev) = (params.q + 1.0, params.p + 1.0);
    let density = |u: &[f64], r: f64| {
        let w = r.powi(n - 1);
        (u[0].max(0.0).powf(eu) * w, u[v_idx].max(0.0).powf(ev) * w)
    };
    let (lo, hi) = (traj.r_start(), traj.r_end());
    for &r in radii {
        if !(r >= lo && r <= hi) {
            return Err(Error::OutOfRange { r, lo, hi });
        }
    }
    let mut sorted: Vec<(usize, f64)> = radii.iter().copied().enumerate().collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));

    // the unresolved core [0, r_start] contributes ∫ density with u frozen at its first value
    let first = &traj.samples()[0];
    let (du0, dv0) = density(&first.u, 1.0);
    let core = lo.powi(n) / n as f64;
    let (mut iu, mut iv) = (du0 * core, dv0 * core);

    let mut out = vec![EnergyPartial { radius: 0.0, u_integral: 0.0, v_integral: 0.0 }; radii.len()];
    let mut buf = vec![0.0; 2 * l];
    let mut next = 0;
    let panel = |seg: &crate::radial_ode::DenseSegment, a: f64, b: f64, buf: &mut [f64]| {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut acc = (0.0, 0.0);
        for (x, w) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
            let r = mid + half * x;
            seg.eval(r, buf);
            let (pu, pv) = density(&buf[..l], r);
            acc.0 += w * half * pu;
            acc.1 += w * half * pv;
        }
        acc
    };
    for seg in traj.segments() {
        let (a, b) = (seg.start(), seg.end());
        while next < sorted.len() && sorted[next].1 <= b {
            let (idx, radius) = sorted[next];
            let (pu, pv) = if radius > a { panel(seg, a, radius, &mut buf) } else { (0.0, 0.0) };
            out[idx] = EnergyPartial { radius, u_integral: iu + pu, v_integral: iv + pv };
            next += 1;
        }
        let (pu, pv) = panel(seg, a, b, &mut buf);
        iu += pu;
        iv += pv;
    }
    while next < sorted.len() {
        let (idx, radius) = sorted[next];
        out[idx] = EnergyPartial { radius, u_integral: iu, v_integral: iv };
        next += 1;
    }
    Ok(out)
}

/// Least-squares slopes of `log u_i` against `log r` over the last decade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub slopes: Vec<f64>,
    pub window: (f64, f64),
    pub points: usize,
    /// Every slope strictly negative.
    pub decaying: bool,
}

const DECAY_POINTS: usize = 64;

pub fn decay_report(traj: &Trajectory) -> Result<DecayReport> {
    if traj.wall_hit().is_some() {
        return Err(Error::NotGlobal);
    }
    let (lo, hi) = (traj.r_start(), traj.r_end());
    if !(lo > 0.0 && hi >= 10.0 * lo) {
        return Err(Error::InsufficientRange { lo, hi });
    }
    let last = &traj.samples()[traj.samples().len() - 1];
    if last.u.iter().any(|&u| u <= 0.0) {
        return Err(Error::NotGlobal);
    }
    let radii = logspace(hi / 10.0, hi, DECAY_POINTS);
    let l = traj.dim();
    let mut logs = vec![Vec::with_capacity(DECAY_POINTS); l];
    for &r in &radii {
        let (u, _) = traj.sample_state(r)?;
        for i in 0..l {
            if u[i] <= 0.0 {
                return Err(Error::NotGlobal);
            }
            logs[i].push(u[i].ln());
        }
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let slopes: Vec<f64> = logs
        .iter()
        .map(|ys| {
            let ym = ys.iter().sum::<f64>() / ys.len() as f64;
            xs.iter().zip(ys).map(|(x, y)| (x - xm) * (y - ym)).sum::<f64>() / sxx
        })
        .collect();
    let decaying = slopes.iter().all(|&s| s < 0.0);
    Ok(DecayReport { slopes, window: (hi / 10.0, hi), points: DECAY_POINTS, decaying })
}

/// Inputs for [`verify_trajectory`] beyond the trajectory itself.
pub struct VerifyContext<'a> {
    pub system: &'a RadialSystem,
    pub alpha: &'a [f64],
    pub params: Option<(&'a LaneEmdenParams, bool)>,
    pub abs_tol: f64,
    pub grid_size: usize,
    /// Upper end of the window for the closed-form comparison.
    pub exact_window: f64,
}

/// Full report for a trajectory. Decay fits are empty when the trajectory is
/// not positive at its end; energies are reported at decades `10, 100, …`
/// up to the end radius.
pub fn verify_trajectory(traj: &Trajectory, ctx: &VerifyContext<'_>) -> Result<VerificationReport> {
    let residual_max = residual_norm(traj, ctx.system, ctx.grid_size)?;
    let decay_fit = match decay_report(traj) {
        Ok(d) => d.slopes,
        Err(Error::NotGlobal | Error::InsufficientRange { .. }) => Vec::new(),
        Err(e) => return Err(e),
    };
    let drift = 10.0 * ctx.abs_tol;
    let monotonic = traj.monotonicity_drift() <= drift && traj.flux_drift() <= drift;
    let mut exact = None;
    let mut energy_partial = Vec::new();
    if let Some((params, scalar)) = ctx.params {
        if let Some(sol) = ExactSolution::for_params(params, scalar, ctx.alpha) {
            exact = Some(exact_error(traj, ctx.alpha, &sol, ctx.exact_window)?);
        }
        let radii: Vec<f64> =
            (1..).map(|e| 10f64.powi(e)).take_while(|&r| r <= traj.r_end() * (1.0 + 1e-12)).collect();
        let radii: Vec<f64> = radii.into_iter().map(|r| r.min(traj.r_end())).collect();
        if traj.r_start() > 0.0 {
            let e = energy_estimate(traj, params, &radii)?;
            energy_partial = e.iter().map(|p| p.u_integral).collect();
        }
    }
    Ok(VerificationReport { residual_max, decay_fit, monotonic, exact_error: exact, energy_partial })
}
