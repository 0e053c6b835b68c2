//! Config-driven experiment harness around the `graddiv` solver.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{cond_sweep, cross_check, mesh_info, run_experiment, Overrides};
