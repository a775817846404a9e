//! Batch runner around `noarb-core`: TOML configs, the simulate-to-classify
//! pipeline, report files and the reference presets.

// NaN must fail range checks, so `!(x > y)` is intended
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod pipeline;
pub mod presets;
pub mod report;

pub use config::{ExperimentConfig, Task};
pub use error::CliError;
pub use pipeline::{run, RunOutput};
