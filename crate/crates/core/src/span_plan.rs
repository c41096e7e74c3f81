//! Span-constrained planning: value iteration with the clipped Bellman
//! operator `L = Clip_M ∘ T_gamma`, followed by greedy policy extraction and
//! construction of a truncated reward under which that policy's value has
//! span at most `M` (up to the target error).

use crate::error::{MdpError, Result};
use crate::mdp::{bellman_step, sup_distance, DiscountFactor, MdpInstance, Policy, ValueFunction};

/// Largest iteration count accepted by [`span_constrained_plan`].
pub const MAX_PLAN_ITERATIONS: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SpanPlanOptions {
    /// Stop before the full iteration count once
    /// `‖L(V) - V‖∞ <= (1 - gamma)^2 target / 3`. Off by default.
    pub early_exit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanPlanResult {
    pub policy: Policy,
    /// Final iterate `V^T`.
    pub value: ValueFunction,
    /// State-major `S x A` truncated reward, elementwise `<= r`.
    pub truncated_rewards: Vec<f64>,
    pub span_bound: f64,
    pub iterations: u64,
    /// `‖L(V^T) - V^T‖∞`.
    pub residual: f64,
}

impl SpanPlanResult {
    /// Truncated reward along the returned policy, one entry per state.
    pub fn policy_truncated_rewards(&self) -> Vec<f64> {
        let a = self.truncated_rewards.len() / self.policy.len();
        self.policy
            .iter()
            .enumerate()
            .map(|(s, &act)| self.truncated_rewards[s * a + act])
            .collect()
    }
}

/// `Clip_M(V) = min(V, (M + min_s V(s)) 1)`.
pub fn clip(v: &[f64], span_bound: f64) -> Result<ValueFunction> {
    if !(span_bound > 0.0) {
        return Err(MdpError::Domain(format!(
            "span bound must be positive, got {span_bound}"
        )));
    }
    let mut out = v.to_vec();
    clip_in_place(&mut out, span_bound);
    Ok(ValueFunction::new(out))
}

pub(crate) fn clip_in_place(v: &mut [f64], span_bound: f64) {
    let cap = span_bound + v.iter().copied().fold(f64::INFINITY, f64::min);
    v.iter_mut().for_each(|x| *x = x.min(cap));
}

/// `L(V) = Clip_M(T_gamma(V))`.
pub fn clipped_bellman(mdp: &MdpInstance, gamma: DiscountFactor, span_bound: f64, v: &[f64]) -> Result<ValueFunction> {
    if v.len() != mdp.n_states() {
        return Err(MdpError::Dimension(format!(
            "value vector has length {}, instance has {} states",
            v.len(),
            mdp.n_states()
        )));
    }
    let mut out = vec![0.0; v.len()];
    bellman_step(mdp, gamma.gamma(), v, &mut out, None);
    clip(&out, span_bound)
}

/// `ceil(ln(3 / ((1 - gamma)^2 target)) / (1 - gamma))`, floored at zero.
pub fn plan_iterations(gamma: DiscountFactor, target_error: f64) -> f64 {
    let one_minus = gamma.one_minus();
    ((3.0 / (one_minus * one_minus * target_error)).ln() / one_minus)
        .ceil()
        .max(0.0)
}

pub fn span_constrained_plan(
    mdp: &MdpInstance,
    gamma: DiscountFactor,
    span_bound: f64,
    target_error: f64,
) -> Result<SpanPlanResult> {
    span_constrained_plan_with(mdp, gamma, span_bound, target_error, SpanPlanOptions::default())
}

pub fn span_constrained_plan_with(
    mdp: &MdpInstance,
    gamma: DiscountFactor,
    span_bound: f64,
    target_error: f64,
    options: SpanPlanOptions,
) -> Result<SpanPlanResult> {
    if !(span_bound > 0.0) {
        return Err(MdpError::Domain(format!(
            "span bound must be positive, got {span_bound}"
        )));
    }
    if !(target_error > 0.0) {
        return Err(MdpError::Domain(format!(
            "target error must be positive, got {target_error}"
        )));
    }
    let total = plan_iterations(gamma, target_error);
    if total > MAX_PLAN_ITERATIONS as f64 {
        return Err(MdpError::Capacity(format!(
            "span-constrained planning needs {total} iterations at horizon {}; reduce the horizon",
            gamma.horizon()
        )));
    }
    let total = total as u64;
    let one_minus = gamma.one_minus();
    let early_threshold = one_minus * one_minus * target_error / 3.0;

    let (s, a) = (mdp.n_states(), mdp.n_actions());
    let g = gamma.gamma();
    let mut v = vec![0.0; s];
    let mut next = vec![0.0; s];
    let mut iterations = 0;
    while iterations < total {
        bellman_step(mdp, g, &v, &mut next, None);
        clip_in_place(&mut next, span_bound);
        let delta = sup_distance(&v, &next);
        std::mem::swap(&mut v, &mut next);
        iterations += 1;
        if options.early_exit && delta <= early_threshold {
            break;
        }
    }

    let mut actions = vec![0; s];
    bellman_step(mdp, g, &v, &mut next, Some(&mut actions));
    clip_in_place(&mut next, span_bound);
    let residual = sup_distance(&v, &next);

    let floor = v.iter().copied().fold(f64::INFINITY, f64::min);
    let mut truncated = Vec::with_capacity(s * a);
    for state in 0..s {
        for action in 0..a {
            let continuation = g * crate::mdp::dot(mdp.row(state, action), &v);
            truncated.push((floor + span_bound - continuation).min(mdp.reward(state, action)));
        }
    }

    Ok(SpanPlanResult {
        policy: Policy::new(actions, a)?,
        value: ValueFunction::new(v),
        truncated_rewards: truncated,
        span_bound,
        iterations,
        residual,
    })
}
