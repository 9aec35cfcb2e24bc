//! Batch front end for the `mlpf-core` estimators: TOML experiment configs,
//! sweeps over methods and levels, CSV output and statistical self-checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod runner;
pub mod selfcheck;

pub use config::{validate, Diagnostic, ExperimentConfig};
pub use runner::{run_sweep, run_with_threads, write_csv, Row, CSV_HEADER};
