//! Fixed workloads shared by the benchmarks.

use degshoot::systems::{lane_emden_system, scalar_polyharmonic_system, LaneEmdenParams};
use degshoot::RadialSystem;

/// Critical scalar k = 1 problem whose solution is the bubble.
pub fn bubble() -> RadialSystem {
    scalar_polyharmonic_system(3, 1, 5.0).expect("valid parameters")
}

/// Critical biharmonic problem in R^5.
pub fn biharmonic() -> RadialSystem {
    scalar_polyharmonic_system(5, 2, 9.0).expect("valid parameters")
}

/// Critical symmetric Lane-Emden pair in R^3.
pub fn lane_emden() -> RadialSystem {
    lane_emden_system(LaneEmdenParams::new(3, 1, 5.0, 5.0)).expect("valid parameters")
}
