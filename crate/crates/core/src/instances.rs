//! Golden instances with closed-form gain/bias, and a seeded random
//! generator of communicating instances.
//!
//! Single-action states are padded to two actions by duplicating the action;
//! duplication changes no value, gain or bias.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MdpError, Result};
use crate::mdp::{MdpInstance, Policy};

/// Two-state instance where the optimal bias span is `T/2` while some
/// gain-optimal policy has zero bias span.
///
/// State 0 has `up` (action 0, reward 1, stays w.p. `1 - 1/T`, else moves to
/// state 1) and `down` (action 1, reward 1/2, moves to state 1). State 1 is
/// absorbing with reward 1/2.
pub fn figure3(t: u32) -> Result<MdpInstance> {
    if t < 1 {
        return Err(MdpError::Domain("figure3 needs T >= 1".into()));
    }
    let stay = 1.0 - 1.0 / t as f64;
    let leave = 1.0 / t as f64;
    MdpInstance::from_rows(
        2,
        2,
        &[vec![stay, leave], vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0]],
        vec![1.0, 0.5, 0.5, 0.5],
    )
}

pub const FIGURE3_UP: [usize; 2] = [0, 0];
pub const FIGURE3_DOWN: [usize; 2] = [1, 0];

/// Four-state instance where the optimal bias span is `eps T/2 + eps + 1/2`
/// while a policy with gain `rho* - eps/2` has bias span `1/2`.
///
/// States 0..4 correspond to 1..4 in the usual drawing. State 0: `down`
/// (action 0, reward 1/2, to state 1) and `right` (action 1, reward 0, to
/// state 2). State 1: reward 1/2, to state 0. State 2: reward 1/2, stays
/// w.p. `1 - 1/T`, else to state 3. State 3: `up` (action 0, reward
/// `1/2 + eps`, stays w.p. `1 - 1/T`, else to state 2) and `left` (action 1,
/// reward 0, to state 1).
pub fn figure4(t: u32, eps: f64) -> Result<MdpInstance> {
    if t < 1 {
        return Err(MdpError::Domain("figure4 needs T >= 1".into()));
    }
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(MdpError::Domain(format!(
            "figure4 needs 0 < eps <= 1/2 so rewards stay in [0, 1], got {eps}"
        )));
    }
    let stay = 1.0 - 1.0 / t as f64;
    let leave = 1.0 / t as f64;
    let to = |s: usize| {
        let mut row = vec![0.0; 4];
        row[s] = 1.0;
        row
    };
    MdpInstance::from_rows(
        4,
        2,
        &[
            to(1),
            to(2),
            to(0),
            to(0),
            vec![0.0, 0.0, stay, leave],
            vec![0.0, 0.0, stay, leave],
            vec![0.0, 0.0, leave, stay],
            to(1),
        ],
        vec![0.5, 0.0, 0.5, 0.5, 0.5, 0.5, 0.5 + eps, 0.0],
    )
}

/// Down at state 0, left at state 3.
pub const FIGURE4_DL: [usize; 4] = [0, 0, 0, 1];
/// Right at state 0, up at state 3.
pub const FIGURE4_RU: [usize; 4] = [1, 0, 0, 0];

pub fn named_policy(actions: &[usize], mdp: &MdpInstance) -> Policy {
    Policy::for_mdp(actions.to_vec(), mdp).expect("named policy fits its instance")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardStyle {
    /// Uniform on `[0, 1]`.
    Uniform,
    /// Each reward is 0 or 1.
    Bernoulli,
    /// Multiples of 1/4.
    Quarters,
}

impl std::str::FromStr for RewardStyle {
    type Err = MdpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "bernoulli" => Ok(Self::Bernoulli),
            "quarters" => Ok(Self::Quarters),
            other => Err(MdpError::Domain(format!("unknown reward style {other:?}"))),
        }
    }
}

impl RewardStyle {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Bernoulli => "bernoulli",
            Self::Quarters => "quarters",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub seed: u64,
    /// Probability that an off-cycle transition entry is forced to zero.
    pub sparsity: f64,
    pub rewards: RewardStyle,
}

/// Random communicating instance.
///
/// Action 0 at state `s` always puts positive mass on `s + 1 (mod S)`, so the
/// chain of every policy using action 0 is irreducible and the instance is
/// communicating (hence weakly communicating).
pub fn random_instance(spec: &RandomSpec) -> Result<MdpInstance> {
    if spec.n_states == 0 || spec.n_actions == 0 {
        return Err(MdpError::Domain("random instance needs S, A >= 1".into()));
    }
    if !(0.0..1.0).contains(&spec.sparsity) {
        return Err(MdpError::Domain(format!(
            "sparsity must lie in [0, 1), got {}",
            spec.sparsity
        )));
    }
    let (s, a) = (spec.n_states, spec.n_actions);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::with_capacity(s * a);
    let mut rewards = Vec::with_capacity(s * a);
    for state in 0..s {
        for action in 0..a {
            let cycle = (state + 1) % s;
            let mut w: Vec<f64> = (0..s)
                .map(|j| {
                    let keep = rng.random::<f64>() >= spec.sparsity;
                    let x = rng.random::<f64>();
                    if keep || (action == 0 && j == cycle) {
                        x + 0.05
                    } else {
                        0.0
                    }
                })
                .collect();
            if w.iter().all(|&x| x == 0.0) {
                w[rng.random_range(0..s)] = 1.0;
            }
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= total);
            rows.push(w);
            let u = rng.random::<f64>();
            rewards.push(match spec.rewards {
                RewardStyle::Uniform => u,
                RewardStyle::Bernoulli => (u < 0.5) as u8 as f64,
                RewardStyle::Quarters => (u * 5.0).floor().min(4.0) / 4.0,
            });
        }
    }
    MdpInstance::from_rows(s, a, &rows, rewards)
}
