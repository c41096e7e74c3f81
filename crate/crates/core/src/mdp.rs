//! Tabular MDP model: instances, deterministic policies, value vectors,
//! discount factors, the span seminorm, exact discounted policy evaluation
//! and the discounted Bellman optimality operator.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{MdpError, Result};

/// Rows whose sum deviates from one by more than this are rejected.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Residual target for [`evaluate_discounted`].
pub const EVALUATION_RESIDUAL: f64 = 1e-10;

/// A finite MDP with dense transition kernel and rewards in `[0, 1]`.
///
/// Transitions are stored row-major: the distribution over next states for
/// the pair `(s, a)` occupies `transitions[(s * A + a) * S..][..S]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpInstance {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
}

impl MdpInstance {
    /// Builds a validated instance from flat row-major arrays.
    ///
    /// Rows that are off by at most [`ROW_SUM_TOLERANCE`] are renormalized.
    /// Rows already within floating-point accumulation noise of one are kept
    /// bit-for-bit, so renormalization is idempotent.
    pub fn new(n_states: usize, n_actions: usize, mut transitions: Vec<f64>, rewards: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(MdpError::Dimension(format!(
                "need at least one state and one action, got S={n_states}, A={n_actions}"
            )));
        }
        let pairs = n_states * n_actions;
        if transitions.len() != pairs * n_states {
            return Err(MdpError::Dimension(format!(
                "expected {} transition entries for S={n_states}, A={n_actions}, got {}",
                pairs * n_states,
                transitions.len()
            )));
        }
        if rewards.len() != pairs {
            return Err(MdpError::Dimension(format!(
                "expected {pairs} reward entries, got {}",
                rewards.len()
            )));
        }
        let noise = 2.0 * n_states as f64 * f64::EPSILON;
        for pair in 0..pairs {
            let (state, action) = (pair / n_actions, pair % n_actions);
            let row = &mut transitions[pair * n_states..(pair + 1) * n_states];
            for (next, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(MdpError::InvalidProbability {
                        state,
                        action,
                        next,
                        value: p,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            let deviation = (sum - 1.0).abs();
            if deviation > ROW_SUM_TOLERANCE {
                return Err(MdpError::RowSum { state, action, sum });
            }
            if deviation > noise {
                row.iter_mut().for_each(|p| *p /= sum);
            }
            let r = rewards[pair];
            if !(0.0..=1.0).contains(&r) {
                return Err(MdpError::InvalidReward {
                    state,
                    action,
                    value: r,
                });
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
        })
    }

    /// Builds an instance from one transition row per `(s, a)` pair, ordered
    /// state-major, and a matching list of rewards.
    pub fn from_rows(n_states: usize, n_actions: usize, rows: &[Vec<f64>], rewards: Vec<f64>) -> Result<Self> {
        if rows.len() != n_states * n_actions {
            return Err(MdpError::Dimension(format!(
                "expected {} transition rows, got {}",
                n_states * n_actions,
                rows.len()
            )));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != n_states) {
            return Err(MdpError::Dimension(format!(
                "transition row {bad} has length {}, expected {n_states}",
                rows[bad].len()
            )));
        }
        Self::new(n_states, n_actions, rows.concat(), rewards)
    }

    /// Assembles an instance whose rows are already exact distributions.
    pub(crate) fn from_parts_unchecked(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(transitions.len(), n_states * n_actions * n_states);
        debug_assert_eq!(rewards.len(), n_states * n_actions);
        Self {
            n_states,
            n_actions,
            transitions,
            rewards,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Distribution over next states for `(state, action)`.
    #[inline]
    pub fn row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.n_actions + action) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    #[inline]
    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[state * self.n_actions + action]
    }

    /// Flat row-major transition array.
    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    /// Flat state-major reward array of length `S * A`.
    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// `r(s,a) + gamma * P(.|s,a) . v`.
    #[inline]
    pub fn q_value(&self, state: usize, action: usize, gamma: f64, v: &[f64]) -> f64 {
        self.reward(state, action) + gamma * dot(self.row(state, action), v)
    }

    /// Dense `S x S` matrix `P_pi`.
    pub fn policy_kernel(&self, policy: &Policy) -> DMatrix<f64> {
        let s = self.n_states;
        DMatrix::from_fn(s, s, |i, j| self.row(i, policy[i])[j])
    }

    /// Vector `r_pi`.
    pub fn policy_rewards(&self, policy: &Policy) -> Vec<f64> {
        (0..self.n_states).map(|s| self.reward(s, policy[s])).collect()
    }

    /// Number of deterministic stationary policies, `A^S`, or `None` on overflow.
    pub fn policy_count(&self) -> Option<u64> {
        (self.n_actions as u64).checked_pow(u32::try_from(self.n_states).ok()?)
    }

    fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.n_states {
            return Err(MdpError::Dimension(format!(
                "{what} has length {len}, instance has {} states",
                self.n_states
            )));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A deterministic stationary policy: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Policy(Vec<usize>);

impl Policy {
    /// Validates every action against `n_actions`.
    pub fn new(actions: Vec<usize>, n_actions: usize) -> Result<Self> {
        if let Some((state, &action)) = actions.iter().enumerate().find(|(_, &a)| a >= n_actions) {
            return Err(MdpError::InvalidPolicy {
                state,
                action,
                n_actions,
            });
        }
        Ok(Self(actions))
    }

    /// Policy for `mdp`, checking both length and action range.
    pub fn for_mdp(actions: Vec<usize>, mdp: &MdpInstance) -> Result<Self> {
        mdp.check_len(actions.len(), "policy")?;
        Self::new(actions, mdp.n_actions())
    }

    /// Decodes the `index`-th policy in mixed-radix order (state 0 is the
    /// least significant digit).
    pub fn from_index(mut index: u64, n_states: usize, n_actions: usize) -> Self {
        let base = n_actions as u64;
        let actions = (0..n_states)
            .map(|_| {
                let a = (index % base) as usize;
                index /= base;
                a
            })
            .collect();
        Self(actions)
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub(crate) fn check(&self, mdp: &MdpInstance) -> Result<()> {
        mdp.check_len(self.0.len(), "policy")?;
        if let Some((state, &action)) = self.0.iter().enumerate().find(|(_, &a)| a >= mdp.n_actions()) {
            return Err(MdpError::InvalidPolicy {
                state,
                action,
                n_actions: mdp.n_actions(),
            });
        }
        Ok(())
    }
}

impl Deref for Policy {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

/// Per-state real vector (discounted values, gains, biases).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValueFunction(Vec<f64>);

impl ValueFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Span seminorm; zero for an empty vector.
    pub fn span(&self) -> f64 {
        span(&self.0).unwrap_or(0.0)
    }
}

impl Deref for ValueFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ValueFunction {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// Discount factor stored together with its effective horizon `1/(1-gamma)`.
///
/// Formulas that need `1 - gamma` should use [`DiscountFactor::one_minus`],
/// which is computed from the horizon and stays accurate near `gamma = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountFactor {
    gamma: f64,
    horizon: f64,
}

impl DiscountFactor {
    /// From an effective horizon `h >= 1`; `gamma = 1 - 1/h`.
    pub fn from_horizon(horizon: f64) -> Result<Self> {
        if !horizon.is_finite() || horizon < 1.0 {
            return Err(MdpError::InvalidDiscount(format!(
                "effective horizon must be finite and >= 1, got {horizon}"
            )));
        }
        Ok(Self {
            gamma: 1.0 - 1.0 / horizon,
            horizon,
        })
    }

    /// From `gamma` in `[0, 1)`.
    pub fn from_gamma(gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(MdpError::InvalidDiscount(format!(
                "gamma must lie in [0, 1), got {gamma}"
            )));
        }
        Ok(Self {
            gamma,
            horizon: 1.0 / (1.0 - gamma),
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `1 - gamma`, as `1 / horizon`.
    pub fn one_minus(&self) -> f64 {
        1.0 / self.horizon
    }
}

/// Span seminorm `max_s v(s) - min_s v(s)`.
pub fn span(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(MdpError::Dimension("span of an empty vector".into()));
    }
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    Ok(hi - lo)
}

/// Sup-norm distance between two equally sized vectors.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Exact `V^pi_gamma = (I - gamma P_pi)^{-1} r_pi`.
pub fn evaluate_discounted(mdp: &MdpInstance, policy: &Policy, gamma: DiscountFactor) -> Result<ValueFunction> {
    policy.check(mdp)?;
    let rewards = mdp.policy_rewards(policy);
    evaluate_with_rewards(mdp, policy, gamma, &rewards)
}

/// Discounted value of `policy` under the transitions of `mdp` and an
/// arbitrary per-state reward vector (used for truncated rewards, which may
/// leave `[0, 1]`).
pub fn evaluate_with_rewards(
    mdp: &MdpInstance,
    policy: &Policy,
    gamma: DiscountFactor,
    state_rewards: &[f64],
) -> Result<ValueFunction> {
    policy.check(mdp)?;
    mdp.check_len(state_rewards.len(), "reward vector")?;
    let s = mdp.n_states();
    let g = gamma.gamma();
    let kernel = mdp.policy_kernel(policy);
    let system = DMatrix::<f64>::identity(s, s) - kernel * g;
    let rhs = DVector::from_column_slice(state_rewards);

    let mut values = match system.lu().solve(&rhs) {
        Some(x) if x.iter().all(|v| v.is_finite()) => x.as_slice().to_vec(),
        _ => vec![0.0; s],
    };

    let residual = |v: &[f64]| -> f64 {
        (0..s)
            .map(|i| (v[i] - state_rewards[i] - g * dot(mdp.row(i, policy[i]), v)).abs())
            .fold(0.0, f64::max)
    };

    // Fixed-point refinement when the direct solve leaves a visible residual.
    let mut res = residual(&values);
    let mut rounds = 0u64;
    let mut next = vec![0.0; s];
    while res > EVALUATION_RESIDUAL {
        if rounds >= 1_000_000 {
            return Err(MdpError::NonConvergence {
                iterations: rounds,
                residual: res,
            });
        }
        for i in 0..s {
            next[i] = state_rewards[i] + g * dot(mdp.row(i, policy[i]), &values);
        }
        std::mem::swap(&mut values, &mut next);
        res = residual(&values);
        rounds += 1;
    }
    Ok(ValueFunction(values))
}

/// Writes `T_gamma(v)` into `out` and returns the greedy action per state
/// through `policy_out` when given. Ties go to the lowest action index.
pub(crate) fn bellman_step(
    mdp: &MdpInstance,
    gamma: f64,
    v: &[f64],
    out: &mut [f64],
    mut policy_out: Option<&mut [usize]>,
) {
    for s in 0..mdp.n_states() {
        let mut best = f64::NEG_INFINITY;
        let mut best_a = 0;
        for a in 0..mdp.n_actions() {
            let q = mdp.q_value(s, a, gamma, v);
            if q > best {
                best = q;
                best_a = a;
            }
        }
        out[s] = best;
        if let Some(p) = policy_out.as_deref_mut() {
            p[s] = best_a;
        }
    }
}

/// Discounted Bellman optimality operator `T_gamma(V)(s) = max_a r(s,a) + gamma P_sa V`.
pub fn bellman_operator(mdp: &MdpInstance, gamma: DiscountFactor, v: &[f64]) -> Result<ValueFunction> {
    mdp.check_len(v.len(), "value vector")?;
    let mut out = vec![0.0; mdp.n_states()];
    bellman_step(mdp, gamma.gamma(), v, &mut out, None);
    Ok(ValueFunction(out))
}

/// Policy greedy with respect to `v`; ties go to the lowest action index.
pub fn greedy_policy(mdp: &MdpInstance, gamma: DiscountFactor, v: &[f64]) -> Result<Policy> {
    mdp.check_len(v.len(), "value vector")?;
    let mut out = vec![0.0; mdp.n_states()];
    let mut actions = vec![0; mdp.n_states()];
    bellman_step(mdp, gamma.gamma(), v, &mut out, Some(&mut actions));
    Ok(Policy(actions))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(r: f64) -> MdpInstance {
        MdpInstance::new(1, 1, vec![1.0], vec![r]).unwrap()
    }

    fn two_cycle() -> MdpInstance {
        MdpInstance::from_rows(2, 1, &[vec![0.0, 1.0], vec![1.0, 0.0]], vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn span_examples() {
        assert_eq!(span(&[1.0, 3.0, 2.0]).unwrap(), 2.0);
        assert_eq!(span(&[0.7; 4]).unwrap(), 0.0);
        assert!(matches!(span(&[]), Err(MdpError::Dimension(_))));
    }

    #[test]
    fn single_absorbing_state_value() {
        let mdp = single_state(0.5);
        let g = DiscountFactor::from_gamma(0.9).unwrap();
        let v = evaluate_discounted(&mdp, &Policy(vec![0]), g).unwrap();
        assert!((v[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn two_cycle_value_matches_hand_solution() {
        // V0 = 1 + V1/2, V1 = V0/2  =>  V0 = 4/3, V1 = 2/3
        let g = DiscountFactor::from_gamma(0.5).unwrap();
        let v = evaluate_discounted(&two_cycle(), &Policy(vec![0, 0]), g).unwrap();
        assert!((v[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((v[1] - 2.0 / 3.0).abs() < 1e-12);
        // brute-force iteration agrees
        let mut w = [0.0f64; 2];
        for _ in 0..200 {
            w = [1.0 + 0.5 * w[1], 0.5 * w[0]];
        }
        assert!(sup_distance(&v, &w) < 1e-12);
    }

    #[test]
    fn rejects_bad_rows_and_rewards() {
        let err = MdpInstance::from_rows(2, 1, &[vec![0.5, 0.4], vec![1.0, 0.0]], vec![0.0, 0.0]).unwrap_err();
        assert!(matches!(
            err,
            MdpError::RowSum {
                state: 0,
                action: 0,
                ..
            }
        ));
        let err = MdpInstance::new(1, 1, vec![1.0], vec![1.5]).unwrap_err();
        assert!(matches!(err, MdpError::InvalidReward { .. }));
        let err = MdpInstance::new(1, 1, vec![1.2], vec![0.0]).unwrap_err();
        assert!(matches!(err, MdpError::InvalidProbability { .. }));
    }

    #[test]
    fn small_row_deviation_is_renormalized_once() {
        let m = MdpInstance::from_rows(2, 1, &[vec![0.5, 0.5 + 5e-10], vec![1.0, 0.0]], vec![0.0; 2]).unwrap();
        let sum: f64 = m.row(0, 0).iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
        let again = MdpInstance::new(2, 1, m.transitions().to_vec(), m.rewards().to_vec()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn bellman_of_zero_is_max_reward() {
        let m = MdpInstance::from_rows(
            2,
            2,
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]],
            vec![0.2, 0.7, 0.9, 0.1],
        )
        .unwrap();
        let g = DiscountFactor::from_gamma(0.9).unwrap();
        let tv = bellman_operator(&m, g, &[0.0, 0.0]).unwrap();
        assert_eq!(&*tv, &[0.7, 0.9]);
        assert_eq!(greedy_policy(&m, g, &[0.0, 0.0]).unwrap().actions(), &[1, 0]);
    }

    #[test]
    fn greedy_ties_pick_lowest_action() {
        let m = MdpInstance::from_rows(1, 3, &[vec![1.0], vec![1.0], vec![1.0]], vec![0.5; 3]).unwrap();
        let g = DiscountFactor::from_gamma(0.5).unwrap();
        assert_eq!(greedy_policy(&m, g, &[1.0]).unwrap().actions(), &[0]);
    }

    #[test]
    fn discount_factor_roundtrip() {
        let d = DiscountFactor::from_horizon(32.0).unwrap();
        assert_eq!(d.gamma(), 0.96875);
        assert_eq!(d.one_minus(), 1.0 / 32.0);
        assert!(DiscountFactor::from_gamma(1.0).is_err());
        assert!(DiscountFactor::from_horizon(0.5).is_err());
        assert_eq!(DiscountFactor::from_horizon(1.0).unwrap().gamma(), 0.0);
    }

    #[test]
    fn policy_index_decoding_covers_all_policies() {
        let all: std::collections::HashSet<_> = (0..9).map(|i| Policy::from_index(i, 2, 3)).collect();
        assert_eq!(all.len(), 9);
        assert_eq!(Policy::from_index(5, 2, 3).actions(), &[2, 1]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = two_cycle();
        let g = DiscountFactor::from_gamma(0.5).unwrap();
        assert!(matches!(bellman_operator(&m, g, &[0.0]), Err(MdpError::Dimension(_))));
        assert!(Policy::for_mdp(vec![0, 1], &m).is_err());
    }
}
