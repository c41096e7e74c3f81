//! Exact post-hoc checks of solver contracts and average-reward identities.
//!
//! Everything here evaluates policies by direct linear solves (or by
//! enumeration), never through the iterative solvers being checked, so the
//! reports serve as independent certificates on desk-scale instances.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dmdp::solve_dmdp;
use crate::error::Result;
use crate::exact::{gain_bias, limiting_matrix, optimal_discounted_value, DEFAULT_ENUMERATION_CAP};
use crate::mdp::{
    bellman_step, evaluate_discounted, evaluate_with_rewards, sup_distance, DiscountFactor, MdpInstance, Policy,
    ValueFunction,
};
use crate::span_plan::{clip_in_place, span_constrained_plan};

/// Accuracy of a [`solve_dmdp`] output against the enumerated optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmdpContractReport {
    /// `‖Ṽ - V*‖∞`.
    pub value_error: f64,
    /// `max_s V*(s) - V^π̃(s)`.
    pub policy_loss: f64,
}

impl DmdpContractReport {
    pub fn holds(&self, target_error: f64, slack: f64) -> bool {
        self.value_error <= target_error + slack && self.policy_loss <= target_error + slack
    }
}

pub fn dmdp_contract(mdp: &MdpInstance, gamma: DiscountFactor, target_error: f64) -> Result<DmdpContractReport> {
    let (v_star, _) = optimal_discounted_value(mdp, gamma)?;
    let sol = solve_dmdp(mdp, gamma, target_error)?;
    let v_pi = evaluate_discounted(mdp, &sol.policy, gamma)?;
    Ok(DmdpContractReport {
        value_error: sup_distance(&sol.value, &v_star),
        policy_loss: v_star
            .iter()
            .zip(v_pi.iter())
            .map(|(a, b)| a - b)
            .fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Iterates `Clip_M ∘ T_gamma` from zero until successive iterates differ
/// by at most `tol` (or a million sweeps pass).
pub fn clipped_fixed_point(mdp: &MdpInstance, gamma: DiscountFactor, span_bound: f64, tol: f64) -> ValueFunction {
    let s = mdp.n_states();
    let mut v = vec![0.0; s];
    let mut next = vec![0.0; s];
    for _ in 0..1_000_000 {
        bellman_step(mdp, gamma.gamma(), &v, &mut next, None);
        clip_in_place(&mut next, span_bound);
        let delta = sup_distance(&v, &next);
        std::mem::swap(&mut v, &mut next);
        if delta <= tol {
            break;
        }
    }
    ValueFunction::new(v)
}

/// Measured quantities for the three clauses of the span-constrained
/// planning guarantee. Each field is phrased so that it must be `<= 0`
/// (up to slack) or `<=` the stated bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanPlanReport {
    pub target_error: f64,
    pub span_bound: f64,
    /// (a) `‖V^T - V*_{γ,M}‖∞`.
    pub proximity: f64,
    /// (b) `max (r̃ - r)`.
    pub truncation_excess: f64,
    /// (b) `‖V^π̂_{γ,r̃} - V*_{γ,M}‖∞`.
    pub truncated_value_gap: f64,
    /// (b) `sp(V^π̂_{γ,r̃})`.
    pub truncated_value_span: f64,
    /// (c) `max (V^π̂_{γ,r̃} - V^π̂_γ)`.
    pub true_below_truncated: f64,
    /// (c) `max (V*_{γ,M} - ε - V^π̂_{γ,r̃})`.
    pub near_optimality_gap: f64,
    /// (c) `max (V^{π'}_{γ,r'} - V*_{γ,M})` over all checked comparators.
    pub dominance_excess: f64,
    pub deterministic_comparators: usize,
    pub sampled_comparators: usize,
}

impl SpanPlanReport {
    pub fn clause_a(&self, slack: f64) -> bool {
        self.proximity <= self.target_error + slack
    }

    pub fn clause_b(&self, slack: f64) -> bool {
        self.truncation_excess <= 0.0
            && self.truncated_value_gap <= self.target_error + slack
            && self.truncated_value_span <= self.span_bound + 2.0 * self.target_error + slack
    }

    pub fn clause_c(&self, slack: f64) -> bool {
        self.true_below_truncated <= slack && self.near_optimality_gap <= slack && self.dominance_excess <= slack
    }

    pub fn holds(&self, slack: f64) -> bool {
        self.clause_a(slack) && self.clause_b(slack) && self.clause_c(slack)
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max)
}

/// Runs span-constrained planning and checks it against the fixed point of
/// the clipped operator (iterated to `1e-13`), all deterministic comparator
/// policies with `r' = r` whose value span is at most `M`, and `samples`
/// random sub-rewards `r' <= r` paired with random policies.
pub fn span_plan_check(
    mdp: &MdpInstance,
    gamma: DiscountFactor,
    span_bound: f64,
    target_error: f64,
    samples: usize,
    seed: u64,
) -> Result<SpanPlanReport> {
    let plan = span_constrained_plan(mdp, gamma, span_bound, target_error)?;
    let fixed = clipped_fixed_point(mdp, gamma, span_bound, 1e-13);

    let truncation_excess = max_diff(&plan.truncated_rewards, mdp.rewards());
    let r_tilde = plan.policy_truncated_rewards();
    let v_trunc = evaluate_with_rewards(mdp, &plan.policy, gamma, &r_tilde)?;
    let v_true = evaluate_discounted(mdp, &plan.policy, gamma)?;
    let lowered: Vec<f64> = fixed.iter().map(|x| x - target_error).collect();

    let mut dominance_excess = f64::NEG_INFINITY;
    let mut deterministic = 0;
    let (s, a) = (mdp.n_states(), mdp.n_actions());
    let count = mdp
        .policy_count()
        .filter(|&c| c <= DEFAULT_ENUMERATION_CAP)
        .unwrap_or(0);
    for i in 0..count {
        let pi = Policy::from_index(i, s, a);
        let v = evaluate_discounted(mdp, &pi, gamma)?;
        if v.span() <= span_bound {
            deterministic += 1;
            dominance_excess = dominance_excess.max(max_diff(&v, &fixed));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let pi = Policy::new((0..s).map(|_| rng.random_range(0..a)).collect(), a)?;
        let shrink: Vec<f64> = (0..s).map(|_| rng.random::<f64>()).collect();
        let base: Vec<f64> = (0..s).map(|st| shrink[st] * mdp.reward(st, pi[st])).collect();
        let v = evaluate_with_rewards(mdp, &pi, gamma, &base)?;
        let sp = v.span();
        // Scaling the reward scales the value, so c <= M / sp keeps the span feasible.
        let scale = if sp > 0.0 { (span_bound / sp).min(1.0) } else { 1.0 } * (1.0 - rng.random::<f64>());
        let scaled: Vec<f64> = v.iter().map(|x| x * scale).collect();
        dominance_excess = dominance_excess.max(max_diff(&scaled, &fixed));
    }

    Ok(SpanPlanReport {
        target_error,
        span_bound,
        proximity: sup_distance(&plan.value, &fixed),
        truncation_excess,
        truncated_value_gap: sup_distance(&v_trunc, &fixed),
        truncated_value_span: v_trunc.span(),
        true_below_truncated: max_diff(&v_trunc, &v_true),
        near_optimality_gap: max_diff(&lowered, &v_trunc),
        dominance_excess,
        deterministic_comparators: deterministic,
        sampled_comparators: samples,
    })
}

/// Discounted/average-reward relations for one policy at one discount.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyHorizonReport {
    /// `(1-γ) min V - min ρ`, must be `<= 0`.
    pub lower_sandwich: f64,
    /// `max ρ - (1-γ) max V`, must be `<= 0`.
    pub upper_sandwich: f64,
    /// `‖ρ - (1-γ) P∞ V‖∞`.
    pub projection_error: f64,
    pub constant_gain: bool,
    /// `‖ρ/(1-γ) - V‖∞ - sp(h)`, meaningful for constant gain.
    pub horizon_excess: f64,
    /// `sp(V) - 2 sp(h)`, meaningful for constant gain.
    pub value_span_excess: f64,
}

impl PolicyHorizonReport {
    pub fn holds(&self, slack: f64) -> bool {
        self.lower_sandwich <= slack
            && self.upper_sandwich <= slack
            && self.projection_error <= slack
            && (!self.constant_gain || (self.horizon_excess <= slack && self.value_span_excess <= slack))
    }
}

pub fn policy_horizon_check(mdp: &MdpInstance, policy: &Policy, gamma: DiscountFactor) -> Result<PolicyHorizonReport> {
    let gb = gain_bias(mdp, policy)?;
    let v = evaluate_discounted(mdp, policy, gamma)?;
    let limit = limiting_matrix(mdp, policy)?;
    let one_minus = gamma.one_minus();
    let projected = (&limit * DVector::from_column_slice(&v)) * one_minus;
    let scaled_gain: Vec<f64> = gb.gain.iter().map(|g| g / one_minus).collect();
    let span_h = gb.bias.span();
    Ok(PolicyHorizonReport {
        lower_sandwich: one_minus * v.min() - gb.gain.min(),
        upper_sandwich: gb.gain.max() - one_minus * v.max(),
        projection_error: sup_distance(&gb.gain, projected.as_slice()),
        constant_gain: gb.has_constant_gain(1e-9),
        horizon_excess: sup_distance(&scaled_gain, &v) - span_h,
        value_span_excess: v.span() - 2.0 * span_h,
    })
}

/// Largest absolute residual among `P ρ = ρ`, `ρ + h = r + P h` and `P∞ h = 0`.
pub fn poisson_residual(mdp: &MdpInstance, policy: &Policy) -> Result<f64> {
    let gb = gain_bias(mdp, policy)?;
    let p = mdp.policy_kernel(policy);
    let limit = limiting_matrix(mdp, policy)?;
    let rho = DVector::from_column_slice(&gb.gain);
    let h = DVector::from_column_slice(&gb.bias);
    let r = DVector::from_vec(mdp.policy_rewards(policy));
    let gain_eq = (&p * &rho - &rho).amax();
    let poisson = (&rho + &h - r - &p * &h).amax();
    let normal = (&limit * &h).amax();
    Ok(gain_eq.max(poisson).max(normal))
}
