//! Exact average-reward analysis used as the ground-truth oracle.
//!
//! The limiting matrix is built structurally from the closed recurrent
//! classes of the policy's chain, so periodic chains are handled exactly.
//! Gains and biases then follow from the deviation-matrix identity
//! `h = (I - P + P∞)^{-1} (I - P∞) r`.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{MdpError, Result};
use crate::mdp::{evaluate_discounted, span, DiscountFactor, MdpInstance, Policy, ValueFunction};

/// Default cap on `A^S` for brute-force enumeration.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Tolerance for treating a gain as optimal.
pub const GAIN_TOLERANCE: f64 = 1e-7;

/// Gain and bias of a fixed policy.
#[derive(Debug, Clone, PartialEq)]
pub struct GainBias {
    pub gain: ValueFunction,
    pub bias: ValueFunction,
}

impl GainBias {
    /// True when all gain entries agree within `tol`.
    pub fn has_constant_gain(&self, tol: f64) -> bool {
        self.gain.span() <= tol
    }
}

/// Optimal gain and bias of an instance, found by exhaustive enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSummary {
    pub rho_star: ValueFunction,
    pub h_star: ValueFunction,
    pub span_h_star: f64,
    /// Smallest bias span among gain-optimal deterministic policies.
    pub min_gain_optimal_span: f64,
    pub blackwell_policy: Policy,
}

/// Cesàro limit `P∞ = lim (1/T) sum_t P_pi^t`.
pub fn limiting_matrix(mdp: &MdpInstance, policy: &Policy) -> Result<DMatrix<f64>> {
    policy.check(mdp)?;
    Ok(limiting_of_kernel(&mdp.policy_kernel(policy)))
}

pub(crate) fn limiting_of_kernel(p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] > 0.0 {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }

    let mut class_of = vec![usize::MAX; n];
    let mut classes: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for component in tarjan_scc(&graph) {
        let members: Vec<usize> = component.iter().map(|v| v.index()).collect();
        let closed = members
            .iter()
            .all(|&i| (0..n).all(|j| p[(i, j)] == 0.0 || members.contains(&j)));
        if closed {
            let mut members = members;
            members.sort_unstable();
            let dist = stationary_distribution(p, &members);
            for &m in &members {
                class_of[m] = classes.len();
            }
            classes.push((members, dist));
        }
    }

    let mut limit = DMatrix::<f64>::zeros(n, n);
    for (members, dist) in &classes {
        for &i in members {
            for (&j, &w) in members.iter().zip(dist) {
                limit[(i, j)] = w;
            }
        }
    }

    let transient: Vec<usize> = (0..n).filter(|&i| class_of[i] == usize::MAX).collect();
    if transient.is_empty() {
        return limit;
    }
    // Absorption probabilities: (I - Q) X = R, one column per closed class.
    let t = transient.len();
    let q = DMatrix::from_fn(t, t, |a, b| {
        let delta = if a == b { 1.0 } else { 0.0 };
        delta - p[(transient[a], transient[b])]
    });
    let r = DMatrix::from_fn(t, classes.len(), |a, c| {
        classes[c].0.iter().map(|&j| p[(transient[a], j)]).sum()
    });
    // Every transient state reaches a closed class, so I - Q is nonsingular.
    let absorb = q.lu().solve(&r).unwrap_or_else(|| DMatrix::zeros(t, classes.len()));
    for (a, &i) in transient.iter().enumerate() {
        for (c, (members, dist)) in classes.iter().enumerate() {
            let w = absorb[(a, c)];
            for (&j, &d) in members.iter().zip(dist) {
                limit[(i, j)] += w * d;
            }
        }
    }
    limit
}

/// Stationary distribution of the irreducible block `members` of `p`.
fn stationary_distribution(p: &DMatrix<f64>, members: &[usize]) -> Vec<f64> {
    let k = members.len();
    if k == 1 {
        return vec![1.0];
    }
    // Rows 0..k-1: (P_C^T - I) pi = 0, last row: sum(pi) = 1.
    let mut a = DMatrix::from_fn(k, k, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        p[(members[j], members[i])] - delta
    });
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(k);
    b[k - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .unwrap_or_else(|| DVector::from_element(k, 1.0 / k as f64));
    // Clamp tiny negative noise and renormalize.
    let clamped: Vec<f64> = pi.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    clamped.into_iter().map(|x| x / total).collect()
}

/// Gain `rho = P∞ r_pi` and bias `h = (I - P_pi + P∞)^{-1} (I - P∞) r_pi`.
pub fn gain_bias(mdp: &MdpInstance, policy: &Policy) -> Result<GainBias> {
    policy.check(mdp)?;
    let n = mdp.n_states();
    let p = mdp.policy_kernel(policy);
    let limit = limiting_of_kernel(&p);
    let r = DVector::from_vec(mdp.policy_rewards(policy));
    let identity = DMatrix::<f64>::identity(n, n);

    let gain = &limit * &r;
    let fundamental = &identity - &p + &limit;
    let rhs = (&identity - &limit) * &r;
    let bias = fundamental
        .lu()
        .solve(&rhs)
        .ok_or_else(|| MdpError::Numeric("deviation matrix system is singular".into()))?;
    if bias.iter().chain(gain.iter()).any(|x| !x.is_finite()) {
        return Err(MdpError::Numeric("non-finite gain or bias".into()));
    }
    Ok(GainBias {
        gain: ValueFunction::new(gain.as_slice().to_vec()),
        bias: ValueFunction::new(bias.as_slice().to_vec()),
    })
}

fn check_cap(mdp: &MdpInstance, cap: u64) -> Result<u64> {
    match mdp.policy_count() {
        Some(count) if count <= cap => Ok(count),
        other => Err(MdpError::Capacity(format!(
            "{} deterministic policies exceed the enumeration cap {cap}",
            other.map_or_else(|| "overflowing".to_string(), |c| c.to_string())
        ))),
    }
}

fn dominates(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| *x >= *y - tol)
}

/// Brute-force optimal gain, optimal bias and span quantities, with the
/// default enumeration cap.
pub fn enumerate_optimal(mdp: &MdpInstance) -> Result<OptimalSummary> {
    enumerate_optimal_with_cap(mdp, DEFAULT_ENUMERATION_CAP)
}

/// Lexicographic (gain, then bias) maximization over all `A^S`
/// deterministic policies.
pub fn enumerate_optimal_with_cap(mdp: &MdpInstance, cap: u64) -> Result<OptimalSummary> {
    let count = check_cap(mdp, cap)?;
    let (s, a) = (mdp.n_states(), mdp.n_actions());
    let policies = || (0..count).map(|i| Policy::from_index(i, s, a));

    let mut evaluated = Vec::with_capacity(count as usize);
    let mut rho_star = vec![f64::NEG_INFINITY; s];
    for pi in policies() {
        let gb = gain_bias(mdp, &pi)?;
        for (best, &g) in rho_star.iter_mut().zip(gb.gain.iter()) {
            *best = best.max(g);
        }
        evaluated.push((pi, gb));
    }

    let optimal: Vec<&(Policy, GainBias)> = evaluated
        .iter()
        .filter(|(_, gb)| dominates(&gb.gain, &rho_star, GAIN_TOLERANCE))
        .collect();
    if optimal.is_empty() {
        return Err(MdpError::NotWeaklyCommunicating);
    }

    let mut h_max = vec![f64::NEG_INFINITY; s];
    let mut min_span = f64::INFINITY;
    for (_, gb) in &optimal {
        for (best, &h) in h_max.iter_mut().zip(gb.bias.iter()) {
            *best = best.max(h);
        }
        min_span = min_span.min(gb.bias.span());
    }
    let (blackwell, best) = optimal
        .iter()
        .find(|(_, gb)| dominates(&gb.bias, &h_max, GAIN_TOLERANCE))
        .ok_or_else(|| MdpError::Numeric("no gain-optimal policy has entrywise-maximal bias".into()))?;

    let span_h_star = span(&best.bias)?;
    Ok(OptimalSummary {
        rho_star: ValueFunction::new(rho_star),
        h_star: best.bias.clone(),
        span_h_star,
        min_gain_optimal_span: min_span,
        blackwell_policy: blackwell.clone(),
    })
}

/// Exact optimal discounted value `V*_gamma` as the entrywise maximum of
/// exactly evaluated deterministic policies, together with a policy that
/// attains it.
pub fn optimal_discounted_value(mdp: &MdpInstance, gamma: DiscountFactor) -> Result<(ValueFunction, Policy)> {
    let count = check_cap(mdp, DEFAULT_ENUMERATION_CAP)?;
    let (s, a) = (mdp.n_states(), mdp.n_actions());
    let mut best = vec![f64::NEG_INFINITY; s];
    let mut best_policy = None;
    let mut best_total = f64::NEG_INFINITY;
    for i in 0..count {
        let pi = Policy::from_index(i, s, a);
        let v = evaluate_discounted(mdp, &pi, gamma)?;
        for (b, &x) in best.iter_mut().zip(v.iter()) {
            *b = b.max(x);
        }
        let total: f64 = v.iter().sum();
        if total > best_total {
            best_total = total;
            best_policy = Some(pi);
        }
    }
    // The optimal policy is simultaneously optimal everywhere, so it also
    // maximizes the sum of values.
    Ok((ValueFunction::new(best), best_policy.expect("at least one policy")))
}
