//! Solvers for tabular average-reward MDPs under a generative model.
//!
//! The crate provides
//! * the tabular model, span seminorm and exact discounted evaluation ([`mdp`]),
//! * an exact gain/bias oracle with brute-force optimal policies ([`exact`]),
//! * counter-based generative sampling and empirical kernels ([`generative`]),
//! * a value-iteration DMDP planner with a certified accuracy contract ([`dmdp`]),
//! * clipped value iteration for span-constrained planning ([`span_plan`]),
//! * the horizon-calibration and span-penalization learners ([`calibration`]),
//! * the golden instances and a random instance generator ([`instances`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod dmdp;
pub mod error;
pub mod exact;
pub mod generative;
pub mod instances;
pub mod mdp;
pub mod span_plan;
pub mod verify;

pub use calibration::{
    alpha, fixed_eps_calibrate, fixed_n_calibrate, horizon_grid, span_penalized_calibrate, Algorithm,
    CalibrationResult, ConfidenceParams, FixedEpsOptions, HorizonGrid, Termination,
};
pub use dmdp::{solve_dmdp, DmdpSolution};
pub use error::{MdpError, Result};
pub use exact::{enumerate_optimal, gain_bias, limiting_matrix, GainBias, OptimalSummary};
pub use generative::{draw_samples, empirical_kernel, EmpiricalKernel, SampleSet};
pub use mdp::{
    bellman_operator, evaluate_discounted, greedy_policy, span, DiscountFactor, MdpInstance, Policy, ValueFunction,
};
pub use span_plan::{clip, span_constrained_plan, SpanPlanResult};
