//! Generative-model access: i.i.d. next-state draws per `(s, a)` pair and
//! the empirical kernel they induce.
//!
//! Draws are counter based. The `i`-th sample of pair `(s, a)` is the `i`-th
//! 64-bit word of the ChaCha8 stream number `s * A + a` keyed by the seed,
//! so every sample is a pure function of `(seed, s, a, i)` and pairs can be
//! drawn in parallel without changing the output.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{MdpError, Result};
use crate::mdp::MdpInstance;

/// `n` next-state samples for every `(s, a)` pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    n_states: usize,
    n_actions: usize,
    n_per_pair: usize,
    seed: u64,
    /// Pair-major: samples of `(s, a)` at `[(s * A + a) * n..][..n]`.
    samples: Vec<u32>,
}

impl SampleSet {
    /// Builds a sample set from explicit next-state draws, one row per pair.
    pub fn from_rows(n_states: usize, n_actions: usize, rows: &[Vec<u32>], seed: u64) -> Result<Self> {
        if rows.len() != n_states * n_actions {
            return Err(MdpError::Dimension(format!(
                "expected {} sample rows, got {}",
                n_states * n_actions,
                rows.len()
            )));
        }
        let n = rows.first().map_or(0, Vec::len);
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(MdpError::Dimension(
                "sample rows must be non-empty and of equal length".into(),
            ));
        }
        if rows.iter().flatten().any(|&x| x as usize >= n_states) {
            return Err(MdpError::Dimension("sample index out of range".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            n_per_pair: n,
            seed,
            samples: rows.concat(),
        })
    }

    pub fn n_per_pair(&self) -> usize {
        self.n_per_pair
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Next-state draws for `(state, action)`.
    pub fn row(&self, state: usize, action: usize) -> &[u32] {
        let start = (state * self.n_actions + action) * self.n_per_pair;
        &self.samples[start..start + self.n_per_pair]
    }
}

/// Uniform in `[0, 1)` from the top 53 bits of a word.
#[inline]
fn unit_interval(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Inverse CDF with left-closed cells: returns the first `j` with
/// `u < P(0) + ... + P(j)`. Rounding overflow falls back to the last state
/// with positive mass.
#[inline]
fn inverse_cdf(cumulative: &[f64], row: &[f64], u: f64) -> u32 {
    match cumulative.iter().position(|&c| u < c) {
        Some(j) => j as u32,
        None => row.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u32,
    }
}

fn draw_pair(mdp: &MdpInstance, pair: usize, n: usize, seed: u64) -> Vec<u32> {
    let (s, a) = (pair / mdp.n_actions(), pair % mdp.n_actions());
    let row = mdp.row(s, a);
    let cumulative: Vec<f64> = row
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pair as u64);
    rng.set_word_pos(0);
    (0..n)
        .map(|_| inverse_cdf(&cumulative, row, unit_interval(rng.next_u64())))
        .collect()
}

/// Draws `n` i.i.d. next states from `P(.|s,a)` for every pair.
pub fn draw_samples(mdp: &MdpInstance, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(MdpError::Domain("need at least one sample per pair".into()));
    }
    let pairs = mdp.n_states() * mdp.n_actions();
    let rows: Vec<Vec<u32>> = (0..pairs)
        .into_par_iter()
        .map(|pair| draw_pair(mdp, pair, n, seed))
        .collect();
    Ok(SampleSet {
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        n_per_pair: n,
        seed,
        samples: rows.concat(),
    })
}

/// Empirical model `P̂(s'|s,a) = count(s')/n` with the true rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalKernel {
    model: MdpInstance,
    n_per_pair: usize,
}

impl EmpiricalKernel {
    pub fn model(&self) -> &MdpInstance {
        &self.model
    }

    pub fn n_per_pair(&self) -> usize {
        self.n_per_pair
    }

    pub fn into_model(self) -> MdpInstance {
        self.model
    }
}

/// Counts the draws in `samples` into an empirical kernel; rewards are
/// copied from `mdp`.
pub fn empirical_kernel(samples: &SampleSet, mdp: &MdpInstance) -> Result<EmpiricalKernel> {
    if samples.n_states != mdp.n_states() || samples.n_actions != mdp.n_actions() {
        return Err(MdpError::Dimension(format!(
            "samples are for S={}, A={} but the instance has S={}, A={}",
            samples.n_states,
            samples.n_actions,
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    let s = mdp.n_states();
    let n = samples.n_per_pair;
    let pairs = s * mdp.n_actions();
    let mut transitions = vec![0.0; pairs * s];
    let mut counts = vec![0u64; s];
    for pair in 0..pairs {
        counts.iter_mut().for_each(|c| *c = 0);
        for &next in &samples.samples[pair * n..(pair + 1) * n] {
            counts[next as usize] += 1;
        }
        for (dst, &c) in transitions[pair * s..(pair + 1) * s].iter_mut().zip(&counts) {
            *dst = c as f64 / n as f64;
        }
    }
    Ok(EmpiricalKernel {
        model: MdpInstance::from_parts_unchecked(s, mdp.n_actions(), transitions, mdp.rewards().to_vec()),
        n_per_pair: n,
    })
}

/// Draws `n` samples per pair and returns the empirical kernel.
pub fn sample_kernel(mdp: &MdpInstance, n: usize, seed: u64) -> Result<EmpiricalKernel> {
    empirical_kernel(&draw_samples(mdp, n, seed)?, mdp)
}

/// Seed for the `index`-th independent batch derived from a base seed
/// (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_state() -> MdpInstance {
        MdpInstance::from_rows(
            3,
            1,
            &[vec![0.0, 1.0, 0.0], vec![0.2, 0.3, 0.5], vec![0.0, 0.0, 1.0]],
            vec![0.1, 0.2, 0.3],
        )
        .unwrap()
    }

    #[test]
    fn deterministic_row_always_hits_its_state() {
        let s = draw_samples(&three_state(), 500, 3).unwrap();
        assert!(s.row(0, 0).iter().all(|&x| x == 1));
        assert!(s.row(2, 0).iter().all(|&x| x == 2));
    }

    #[test]
    fn same_seed_same_samples() {
        let m = three_state();
        assert_eq!(draw_samples(&m, 100, 9).unwrap(), draw_samples(&m, 100, 9).unwrap());
        assert_ne!(draw_samples(&m, 100, 9).unwrap(), draw_samples(&m, 100, 10).unwrap());
    }

    #[test]
    fn prefix_property_of_counter_scheme() {
        // sample i depends only on (seed, s, a, i)
        let m = three_state();
        let short = draw_samples(&m, 10, 5).unwrap();
        let long = draw_samples(&m, 40, 5).unwrap();
        assert_eq!(short.row(1, 0), &long.row(1, 0)[..10]);
    }

    #[test]
    fn counts_become_frequencies() {
        let m = three_state();
        let rows = vec![vec![1, 1, 1, 1], vec![2, 2, 1, 2], vec![2, 2, 2, 2]];
        let set = SampleSet::from_rows(3, 1, &rows, 0).unwrap();
        let k = empirical_kernel(&set, &m).unwrap();
        assert_eq!(k.model().row(1, 0), &[0.0, 0.25, 0.75]);
        assert_eq!(k.model().rewards(), m.rewards());
    }

    #[test]
    fn single_sample_gives_point_masses() {
        let k = sample_kernel(&three_state(), 1, 11).unwrap();
        for s in 0..3 {
            let row = k.model().row(s, 0);
            assert_eq!(row.iter().filter(|&&p| p == 1.0).count(), 1);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn frequency_of_biased_row() {
        let m = MdpInstance::from_rows(2, 1, &[vec![0.25, 0.75], vec![0.25, 0.75]], vec![0.0; 2]).unwrap();
        let k = sample_kernel(&m, 100_000, 7).unwrap();
        assert!((k.model().row(0, 0)[1] - 0.75).abs() <= 0.01);
    }

    #[test]
    fn dimension_mismatch() {
        let set = SampleSet::from_rows(2, 1, &[vec![0], vec![1]], 0).unwrap();
        assert!(matches!(
            empirical_kernel(&set, &three_state()),
            Err(MdpError::Dimension(_))
        ));
        assert!(draw_samples(&three_state(), 0, 0).is_err());
    }
}
