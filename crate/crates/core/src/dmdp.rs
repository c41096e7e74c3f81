//! Approximate discounted planner used inside the horizon-calibration
//! learners.
//!
//! Value iteration from `V = 0` stops when successive iterates differ by at
//! most `target * (1 - gamma)^2 / (2 gamma)`, or after
//! `ceil(ln(3 / ((1 - gamma)^2 target)) / (1 - gamma)) + 1` sweeps, whichever
//! comes first. Either way the last iterate is within `target` of `V*` and
//! its greedy policy is `target`-optimal.

use crate::error::{MdpError, Result};
use crate::mdp::{bellman_step, sup_distance, DiscountFactor, MdpInstance, Policy, ValueFunction};

/// Hard cap on Bellman applications in a single solve.
pub const MAX_BELLMAN_APPLICATIONS: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DmdpSolution {
    /// Greedy with respect to `value`.
    pub policy: Policy,
    /// The last value-iteration iterate.
    pub value: ValueFunction,
    pub iterations: u64,
    /// `‖T(value) - value‖∞`.
    pub bellman_residual: f64,
}

/// Closed-form sweep count after which `gamma^k <= (1-gamma)^2 target / 3`.
pub fn iteration_cap(gamma: DiscountFactor, target_error: f64) -> f64 {
    let one_minus = gamma.one_minus();
    ((3.0 / (one_minus * one_minus * target_error)).ln() / one_minus)
        .ceil()
        .max(0.0)
        + 1.0
}

/// Solves the DMDP `(mdp, gamma)` to accuracy `target_error`.
pub fn solve_dmdp(mdp: &MdpInstance, gamma: DiscountFactor, target_error: f64) -> Result<DmdpSolution> {
    solve_with_trace(mdp, gamma, target_error, None)
}

/// As [`solve_dmdp`], additionally recording `‖V^{k+1} - V^k‖∞` per sweep.
pub fn solve_dmdp_traced(
    mdp: &MdpInstance,
    gamma: DiscountFactor,
    target_error: f64,
) -> Result<(DmdpSolution, Vec<f64>)> {
    let mut trace = Vec::new();
    let sol = solve_with_trace(mdp, gamma, target_error, Some(&mut trace))?;
    Ok((sol, trace))
}

fn solve_with_trace(
    mdp: &MdpInstance,
    gamma: DiscountFactor,
    target_error: f64,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<DmdpSolution> {
    if !(target_error > 0.0) {
        return Err(MdpError::Domain(format!(
            "target error must be positive, got {target_error}"
        )));
    }
    let s = mdp.n_states();
    let g = gamma.gamma();
    let mut v = vec![0.0; s];
    let mut next = vec![0.0; s];
    let mut actions = vec![0usize; s];
    let mut iterations = 0u64;

    // Any V in [0, 1/(1-gamma)] is already target-accurate.
    if target_error < gamma.horizon() {
        let one_minus = gamma.one_minus();
        let threshold = if g > 0.0 {
            target_error * one_minus * one_minus / (2.0 * g)
        } else {
            f64::INFINITY
        };
        let cap = iteration_cap(gamma, target_error);
        let limit = if cap > MAX_BELLMAN_APPLICATIONS as f64 {
            MAX_BELLMAN_APPLICATIONS
        } else {
            cap as u64
        };
        let mut converged = false;
        let mut delta = f64::INFINITY;
        while iterations < limit {
            bellman_step(mdp, g, &v, &mut next, None);
            delta = sup_distance(&v, &next);
            std::mem::swap(&mut v, &mut next);
            iterations += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(delta);
            }
            if delta <= threshold {
                converged = true;
                break;
            }
        }
        if !converged && cap > MAX_BELLMAN_APPLICATIONS as f64 {
            return Err(MdpError::NonConvergence {
                iterations,
                residual: delta,
            });
        }
    }

    bellman_step(mdp, g, &v, &mut next, Some(&mut actions));
    let bellman_residual = sup_distance(&v, &next);
    Ok(DmdpSolution {
        policy: Policy::new(actions, mdp.n_actions())?,
        value: ValueFunction::new(v),
        iterations,
        bellman_residual,
    })
}
