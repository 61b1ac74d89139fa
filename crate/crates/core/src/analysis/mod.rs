//! Auxiliary iteration, bound curves and their validation against traces.

mod aux;
mod bounds;
mod validate;

pub use aux::{aux_step, gamma_tilde, intersect, AuxTracker, GammaSample, InvariantSplit, GAMMA_COND_TOL, INTERSECT_TOL, SUBSPACE_EQ_TOL};
pub use bounds::{
    bound_curve, conv_factor, distance_ratio, kappa, ratio_to_error, write_bound_csv, BoundCurve, BoundKind,
    BOUND_CSV_COLUMNS,
};
pub use validate::{
    curve_for_trace, curve_origin, validate, validate_single_step, SingleStepReport, ValidationReport, Violation,
    ERROR_TOL, RATIO_TOL,
};
