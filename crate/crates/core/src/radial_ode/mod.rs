//! Radial initial-value problem `u'' + (n-1)/r u' = -F(u)`, `u(0) = alpha`,
//! `u'(0) = 0`, integrated outward until the first component reaches zero.

pub mod dop853;
mod trajectory;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::norm_inf;
use crate::systems::RadialSystem;
use dop853::{Dop853, StepResult};

pub use dop853::DenseSegment;
pub use trajectory::{Sample, Trajectory};

/// Tolerances and truncation settings for one integration.
///
/// `h0` and `decay_eps` scale with the initial value when left unset; see
/// [`IntegrationControls::resolved_h0`] and [`IntegrationControls::resolved_decay_eps`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrationControls {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h0: Option<f64>,
    pub r_max: f64,
    pub event_tol: f64,
    pub decay_eps: Option<f64>,
    pub flat_eps: f64,
    pub max_steps: usize,
}

impl Default for IntegrationControls {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            h0: None,
            r_max: 1e3,
            event_tol: 1e-10,
            decay_eps: None,
            flat_eps: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

/// Relative factor applied to `|alpha|_inf` when `decay_eps` is unset.
pub const DEFAULT_DECAY_FACTOR: f64 = 5e-2;

impl IntegrationControls {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("r_max", self.r_max),
            ("event_tol", self.event_tol),
            ("flat_eps", self.flat_eps),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidControls(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if let Some(h0) = self.h0 {
            if !(h0.is_finite() && h0 > 0.0 && h0 < self.r_max) {
                return Err(Error::InvalidControls(format!("h0 must lie in (0, r_max), got {h0}")));
            }
        }
        if let Some(eps) = self.decay_eps {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::InvalidControls(format!("decay_eps must be > 0, got {eps}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidControls("max_steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Seed radius: `1e-4` times the shortest local time scale `sqrt(n alpha_i / f_i(alpha))`.
    pub fn resolved_h0(&self, n: usize, alpha: &[f64], f_alpha: &[f64]) -> f64 {
        if let Some(h0) = self.h0 {
            return h0;
        }
        let scale = alpha
            .iter()
            .zip(f_alpha)
            .filter(|(_, &f)| f > 0.0)
            .map(|(&a, &f)| (n as f64 * a / f).sqrt())
            .fold(f64::INFINITY, f64::min);
        let scale = if scale.is_finite() { scale } else { 1.0 };
        (1e-4 * scale).min(1e-3 * self.r_max)
    }

    pub fn resolved_decay_eps(&self, alpha: &[f64]) -> f64 {
        self.decay_eps
            .unwrap_or_else(|| DEFAULT_DECAY_FACTOR * norm_inf(alpha))
    }
}

/// How an integration ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ExitOutcome {
    /// First wall contact; `state[i0]` is exactly zero.
    WallHit {
        r0: f64,
        i0: usize,
        state: Vec<f64>,
        dstate: Vec<f64>,
    },
    /// Positive up to `r_end` with every component below the decay threshold.
    GlobalCandidate { r_end: f64, state: Vec<f64> },
    /// Positive up to `r_end` but not yet small.
    Undetermined { r_end: f64, state: Vec<f64>, flat: bool },
}

impl ExitOutcome {
    pub fn kind(&self) -> &'static str {
        match self {
            ExitOutcome::WallHit { .. } => "WallHit",
            ExitOutcome::GlobalCandidate { .. } => "GlobalCandidate",
            ExitOutcome::Undetermined { .. } => "Undetermined",
        }
    }

    pub fn state(&self) -> &[f64] {
        match self {
            ExitOutcome::WallHit { state, .. }
            | ExitOutcome::GlobalCandidate { state, .. }
            | ExitOutcome::Undetermined { state, .. } => state,
        }
    }

    pub fn is_wall_hit(&self) -> bool {
        matches!(self, ExitOutcome::WallHit { .. })
    }

    pub fn is_global(&self) -> bool {
        matches!(self, ExitOutcome::GlobalCandidate { .. })
    }
}

fn check_alpha(system: &RadialSystem, alpha: &[f64]) -> Result<()> {
    if alpha.len() != system.dim() {
        return Err(Error::DimensionMismatch { len: alpha.len(), expected: system.dim() });
    }
    if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::NegativeInitialValue(alpha.to_vec()));
    }
    Ok(())
}

/// Second-order series seed at radius `h0`.
///
/// Components the seed drives below zero are returned as is.
pub fn taylor_start(system: &RadialSystem, alpha: &[f64], h0: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_alpha(system, alpha)?;
    let f = system.eval(alpha)?;
    Ok(taylor_from(system.space_dim(), alpha, &f, h0))
}

fn taylor_from(n: usize, alpha: &[f64], f: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = n as f64;
    let u = alpha.iter().zip(f).map(|(a, fi)| a - fi * h * h / (2.0 * n)).collect();
    let du = f.iter().map(|fi| -fi * h / n).collect();
    (u, du)
}

/// Smallest index attaining the earliest root, treating roots within `tol` as ties.
fn earliest(roots: &[(usize, f64)], tol: f64) -> (f64, Vec<usize>) {
    let r_min = roots.iter().map(|&(_, r)| r).fold(f64::INFINITY, f64::min);
    let tied: Vec<usize> = roots.iter().filter(|&&(_, r)| r <= r_min + tol).map(|&(i, _)| i).collect();
    (r_min, tied)
}

/// Integrates from the Taylor seed until a wall hit or `r_max`.
pub fn integrate_to_exit(
    system: &RadialSystem,
    alpha: &[f64],
    controls: &IntegrationControls,
) -> Result<(Trajectory, ExitOutcome)> {
    controls.validate()?;
    check_alpha(system, alpha)?;
    let l = system.dim();
    let n = system.space_dim();

    if let Some(i0) = alpha.iter().position(|&a| a == 0.0) {
        let mut traj = Trajectory::from_boundary(n, alpha);
        traj.mark_wall_hit(i0);
        let outcome = ExitOutcome::WallHit { r0: 0.0, i0, state: alpha.to_vec(), dstate: vec![0.0; l] };
        return Ok((traj, outcome));
    }

    let f_alpha = system.eval(alpha)?;
    let h0 = controls.resolved_h0(n, alpha, &f_alpha);
    let (u0, du0) = taylor_from(n, alpha, &f_alpha, h0);

    if u0.iter().any(|&u| u <= 0.0) {
        // the seed polynomial itself reaches the wall inside (0, h0]
        let roots: Vec<(usize, f64)> = (0..l)
            .filter(|&i| u0[i] <= 0.0)
            .map(|i| (i, (2.0 * n as f64 * alpha[i] / f_alpha[i]).sqrt()))
            .collect();
        let (r0, tied) = earliest(&roots, controls.event_tol);
        let (mut state, dstate) = taylor_from(n, alpha, &f_alpha, r0);
        for &i in &tied {
            state[i] = 0.0;
        }
        let mut traj = Trajectory::from_seed(n, r0, state.clone(), dstate.clone());
        traj.mark_wall_hit(tied[0]);
        return Ok((traj, ExitOutcome::WallHit { r0, i0: tied[0], state, dstate }));
    }

    let nf = (n - 1) as f64;
    let mut upos = vec![0.0; l];
    let mut fbuf = vec![0.0; l];
    // stage evaluations use F(max(u, 0)); the stored state is never clamped
    let mut rhs = |r: f64, y: &[f64], dy: &mut [f64]| -> bool {
        for i in 0..l {
            upos[i] = y[i].max(0.0);
        }
        system.eval_into(&upos, &mut fbuf);
        for i in 0..l {
            dy[i] = y[l + i];
            dy[l + i] = -fbuf[i] - nf / r * y[l + i];
        }
        dy.iter().all(|v| v.is_finite())
    };

    let mut y0 = u0.clone();
    y0.extend_from_slice(&du0);
    let mut traj = Trajectory::from_seed(n, h0, u0, du0);
    let h_init = h0.min(controls.r_max - h0);
    let mut stepper = Dop853::new(h0, y0, h_init, controls.rel_tol, controls.abs_tol, &mut rhs)
        .map_err(|r| Error::NonFiniteState { r })?;

    let mut steps = 0usize;
    while stepper.r < controls.r_max {
        if steps >= controls.max_steps {
            return Err(Error::StepBudgetExceeded { r: stepper.r, steps });
        }
        steps += 1;
        let remaining = controls.r_max - stepper.r;
        if stepper.h >= remaining {
            stepper.h = remaining;
        } else if stepper.h < 16.0 * f64::EPSILON * stepper.r {
            return Err(Error::StepSizeUnderflow { r: stepper.r, h: stepper.h });
        }
        let seg = match stepper.step(&mut rhs).map_err(|r| Error::NonFiniteState { r })? {
            StepResult::Rejected => continue,
            StepResult::Accepted(seg) => seg,
        };
        let y = &stepper.y;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { r: stepper.r });
        }
        if y[..l].iter().any(|&u| u <= 0.0) {
            return Ok(localize_event(traj, seg, y, l, controls.event_tol));
        }
        let end = if remaining <= seg.h { controls.r_max } else { stepper.r };
        stepper.r = end;
        traj.push(seg, end, y[..l].to_vec(), y[l..].to_vec());
    }

    let last = traj.samples().last().expect("seeded trajectory is non-empty");
    let state = last.u.clone();
    let r_end = last.r;
    let decay_eps = controls.resolved_decay_eps(alpha);
    let outcome = if norm_inf(&state) < decay_eps {
        ExitOutcome::GlobalCandidate { r_end, state }
    } else {
        let f_end = system.eval(&state)?;
        let flat = norm_inf(&f_end) + norm_inf(&last.du) < controls.flat_eps;
        ExitOutcome::Undetermined { r_end, state, flat }
    };
    Ok((traj, outcome))
}

fn localize_event(
    mut traj: Trajectory,
    mut seg: DenseSegment,
    y_new: &[f64],
    l: usize,
    event_tol: f64,
) -> (Trajectory, ExitOutcome) {
    let mut buf = vec![0.0; 2 * l];
    let roots: Vec<(usize, f64)> = (0..l)
        .filter(|&i| y_new[i] <= 0.0)
        .map(|i| {
            let (mut lo, mut hi) = (seg.start(), seg.start() + seg.h);
            while hi - lo > event_tol {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                seg.eval(mid, &mut buf);
                if buf[i] > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (i, lo)
        })
        .collect();
    let (r0, tied) = earliest(&roots, event_tol);
    seg.eval(r0, &mut buf);
    let raw_u = buf[..l].to_vec();
    let mut state = raw_u.clone();
    for &i in &tied {
        state[i] = 0.0;
    }
    let dstate = buf[l..].to_vec();
    seg.truncate(r0);
    if r0 > seg.start() {
        traj.push(seg, r0, raw_u, dstate.clone());
    }
    traj.mark_wall_hit(tied[0]);
    let outcome = ExitOutcome::WallHit { r0, i0: tied[0], state, dstate };
    (traj, outcome)
}
