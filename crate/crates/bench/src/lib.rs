//! Experiment harness around `amdp-core`: instance descriptors and files,
//! sweep configuration, and CSV output.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiment;
pub mod instance_file;
pub mod spec;

pub use experiment::{run_experiment, write_csv, ExperimentConfig, GridPoint, RunRow};
pub use instance_file::{load_instance, save_instance};
pub use spec::InstanceSpec;
