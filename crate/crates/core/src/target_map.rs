//! The boundary-valued target map ψ and the level-set maps φ, φ⁻¹, G = φ∘ψ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{argmax, compensated_sum};
use crate::radial_ode::{integrate_to_exit, ExitOutcome, IntegrationControls};
use crate::systems::RadialSystem;

/// The level set `A_a = {α ≥ 0 : Σα = a}` in `L` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexLevel {
    pub a: f64,
    pub l: usize,
}

impl SimplexLevel {
    pub fn new(a: f64, l: usize) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidParams(format!("level a must be finite and > 0, got {a}")));
        }
        if l == 0 {
            return Err(Error::InvalidParams("level needs at least one component".into()));
        }
        Ok(Self { a, l })
    }

    pub fn barycenter(&self) -> Vec<f64> {
        vec![self.a / self.l as f64; self.l]
    }

    /// `a · e_j`.
    pub fn corner(&self, j: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.l];
        v[j] = self.a;
        v
    }

    pub fn contains(&self, alpha: &[f64]) -> bool {
        alpha.len() == self.l
            && alpha.iter().all(|&x| x >= 0.0)
            && (compensated_sum(alpha) - self.a).abs() <= 1e-12 * self.a
    }
}

/// ψ(α) together with the exit it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetValue {
    pub value: Vec<f64>,
    pub outcome: ExitOutcome,
    /// Indices whose value is exactly zero, tracked from the outcome.
    pub zero_set: Vec<usize>,
}

impl TargetValue {
    pub fn is_resolved(&self) -> bool {
        !matches!(self.outcome, ExitOutcome::Undetermined { .. })
    }
}

/// ψ(α): the wall state at first contact, zero for decaying trajectories and
/// α itself on the boundary of the orthant.
pub fn evaluate_psi(system: &RadialSystem, alpha: &[f64], controls: &IntegrationControls) -> Result<TargetValue> {
    let (_, outcome) = integrate_to_exit(system, alpha, controls)?;
    Ok(target_from_outcome(outcome))
}

pub(crate) fn target_from_outcome(outcome: ExitOutcome) -> TargetValue {
    match &outcome {
        ExitOutcome::WallHit { state, .. } => {
            let zero_set = (0..state.len()).filter(|&i| state[i] == 0.0).collect();
            TargetValue { value: state.clone(), zero_set, outcome }
        }
        ExitOutcome::GlobalCandidate { state, .. } => {
            let l = state.len();
            TargetValue { value: vec![0.0; l], zero_set: (0..l).collect(), outcome }
        }
        ExitOutcome::Undetermined { state, .. } => {
            TargetValue { value: state.clone(), zero_set: Vec::new(), outcome }
        }
    }
}

/// φ(β) = β + (a − Σβ)/L · 1, with the sum pinned to `a`.
pub fn phi(beta: &[f64], level: &SimplexLevel) -> Result<Vec<f64>> {
    if beta.len() != level.l {
        return Err(Error::DimensionMismatch { len: beta.len(), expected: level.l });
    }
    if beta.iter().any(|b| !b.is_finite() || *b < 0.0) {
        return Err(Error::NegativeInitialValue(beta.to_vec()));
    }
    let sum = compensated_sum(beta);
    if sum > level.a + 1e-12 * level.a {
        return Err(Error::LevelViolation { sum, a: level.a });
    }
    let c = (level.a - sum) / level.l as f64;
    let mut out: Vec<f64> = beta.iter().map(|b| b + c).collect();
    pin_sum(&mut out, level.a);
    Ok(out)
}

/// Moves the rounding residual of `Σx − a` onto the largest component until
/// the exact sum is within half an ulp of `a`.
pub(crate) fn pin_sum(x: &mut [f64], a: f64) {
    let j = argmax(x);
    for _ in 0..3 {
        let mut buf = x.to_vec();
        buf.push(-a);
        let residual = compensated_sum(&buf);
        if residual.abs() <= 0.5 * f64::EPSILON * a {
            break;
        }
        x[j] -= residual;
    }
}

/// φ⁻¹(α) = α − min(α) · 1; at least one output component is exactly zero.
pub fn phi_inverse(alpha: &[f64]) -> Vec<f64> {
    let m = alpha.iter().copied().fold(f64::INFINITY, f64::min);
    alpha.iter().map(|x| x - m).collect()
}

/// G(α) = φ(ψ(α)); the identity on the boundary of the level set.
pub fn big_g(
    system: &RadialSystem,
    alpha: &[f64],
    level: &SimplexLevel,
    controls: &IntegrationControls,
) -> Result<Vec<f64>> {
    let psi = evaluate_psi(system, alpha, controls)?;
    g_from_target(alpha, &psi, level, controls.r_max)
}

pub(crate) fn g_from_target(
    alpha: &[f64],
    psi: &TargetValue,
    level: &SimplexLevel,
    r_max: f64,
) -> Result<Vec<f64>> {
    if !psi.is_resolved() {
        return Err(Error::UndeterminedTarget { alpha: alpha.to_vec(), r_max });
    }
    if alpha.contains(&0.0) {
        return Ok(alpha.to_vec());
    }
    phi(&psi.value, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{lane_emden_system, scalar_polyharmonic_system, LaneEmdenParams};

    fn level(a: f64, l: usize) -> SimplexLevel {
        SimplexLevel::new(a, l).unwrap()
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(&[0.0; 3], &level(1.0, 3)).unwrap(), vec![1.0 / 3.0; 3]);
        assert_eq!(phi(&[1.0, 0.0], &level(1.0, 2)).unwrap(), vec![1.0, 0.0]);
        let v = phi(&[0.2, 0.0, 0.2], &level(1.0, 3)).unwrap();
        for (x, y) in v.iter().zip([0.4, 0.2, 0.4]) {
            assert!((x - y).abs() < 1e-16);
        }
        assert_eq!(compensated_sum(&v), 1.0);
    }

    #[test]
    fn phi_rejects_above_level() {
        let err = phi(&[0.7, 0.7], &level(1.0, 2)).unwrap_err();
        assert!(matches!(err, Error::LevelViolation { .. }));
    }

    #[test]
    fn phi_inverse_examples() {
        assert_eq!(phi_inverse(&[1.0 / 3.0; 3]), vec![0.0; 3]);
        let v = phi_inverse(&[0.4, 0.2, 0.4]);
        assert_eq!(v[1], 0.0);
        assert!((v[0] - 0.2).abs() < 1e-16);
        assert_eq!(phi_inverse(&[1.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn psi_boundary_identity() {
        let sys = crate::systems::lane_emden_linear_system(3, 5.0, 5.0).unwrap();
        let t = evaluate_psi(&sys, &[0.3, 0.0, 0.7], &IntegrationControls::default()).unwrap();
        assert_eq!(t.value, vec![0.3, 0.0, 0.7]);
        assert_eq!(t.zero_set, vec![1]);
    }

    #[test]
    fn psi_subcritical_is_zero_at_wall() {
        let sys = scalar_polyharmonic_system(3, 1, 3.0).unwrap();
        let t = evaluate_psi(&sys, &[1.0], &IntegrationControls::default()).unwrap();
        assert_eq!(t.value, vec![0.0]);
        assert!(t.outcome.is_wall_hit());
    }

    #[test]
    fn psi_critical_global() {
        let sys = scalar_polyharmonic_system(3, 1, 5.0).unwrap();
        let c = IntegrationControls { r_max: 100.0, ..Default::default() };
        let t = evaluate_psi(&sys, &[1.0], &c).unwrap();
        assert_eq!(t.value, vec![0.0]);
        assert!(t.outcome.is_global());
        assert_eq!(t.zero_set, vec![0]);
    }

    #[test]
    fn g_on_boundary_is_identity() {
        let sys = lane_emden_system(LaneEmdenParams::new(3, 1, 3.0, 3.0)).unwrap();
        let c = IntegrationControls::default();
        assert_eq!(big_g(&sys, &[1.0, 0.0], &level(1.0, 2), &c).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn g_of_subcritical_midpoint_is_interior() {
        let sys = lane_emden_system(LaneEmdenParams::new(3, 1, 3.0, 3.0)).unwrap();
        let lv = level(1.0, 2);
        let alpha = [0.5, 0.5];
        let c = IntegrationControls::default();
        let psi = evaluate_psi(&sys, &alpha, &c).unwrap();
        let g = big_g(&sys, &alpha, &lv, &c).unwrap();
        assert_eq!(g, phi(&psi.value, &lv).unwrap());
        assert!(g.iter().all(|&x| x > 0.0 && x < 1.0));
        assert_eq!(compensated_sum(&g), 1.0);
    }

    #[test]
    fn g_of_root_is_barycenter() {
        let sys = lane_emden_system(LaneEmdenParams::new(3, 1, 5.0, 5.0)).unwrap();
        let lv = level(2.0, 2);
        let c = IntegrationControls::default();
        assert_eq!(big_g(&sys, &[1.0, 1.0], &lv, &c).unwrap(), lv.barycenter());
    }

    #[test]
    fn g_undetermined_is_an_error() {
        let sys = scalar_polyharmonic_system(3, 1, 5.0).unwrap();
        let c = IntegrationControls { r_max: 2.0, ..Default::default() };
        let err = big_g(&sys, &[1.0], &level(1.0, 1), &c).unwrap_err();
        assert!(matches!(err, Error::UndeterminedTarget { .. }));
    }
}
