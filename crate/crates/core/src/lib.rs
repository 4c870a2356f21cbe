//! Shooting solver for positive radial solutions of semilinear elliptic
//! systems `-Δu = F(u)` on the whole space.
//!
//! The [`radial_ode`] layer integrates one initial value to its first wall
//! contact, [`target_map`] turns that into the boundary-valued map ψ, and
//! [`simplex_solver`] finds a zero of ψ on the level set `Σα = a` with a
//! Sperner labeling. [`verify`] checks candidate solutions after the fact.

pub mod error;
pub mod numeric;
pub mod radial_ode;
pub mod simplex_solver;
pub mod systems;
pub mod target_map;
pub mod verify;

pub use error::{Error, Result};
pub use radial_ode::{integrate_to_exit, taylor_start, ExitOutcome, IntegrationControls, Sample, Trajectory};
pub use systems::{
    check_nondegenerate, criticality, lane_emden_system, scalar_polyharmonic_system, CriticalityReport,
    LaneEmdenParams, Nonlinearity, RadialSystem, Regime,
};
pub use simplex_solver::{solve_zero, Label, RootCertificate, SimplexCell, SolverOptions};
pub use target_map::{big_g, evaluate_psi, phi, phi_inverse, SimplexLevel, TargetValue};
pub use verify::{decay_report, energy_estimate, exact_bubble, residual_norm, scaling_check, VerificationReport};
