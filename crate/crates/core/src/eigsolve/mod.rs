//! Rayleigh–Ritz extraction and block preconditioned iterations.

mod iterate;
mod ritz;
mod trace;

pub use iterate::{
    bpg_step, initial_block, is_converged, pinvit_block_step, run_iteration, run_iteration_observed, Method,
    RunConfig, StepObserver,
};
pub use ritz::{rayleigh_ritz, ritz_in, Pencil, ResidualNorm, RitzSet};
pub use trace::{write_trace_csv, AuxFields, IterTrace, StepRecord};
