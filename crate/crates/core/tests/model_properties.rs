use amdp_core::exact::optimal_discounted_value;
use amdp_core::instances::{figure3, random_instance, RandomSpec, RewardStyle};
use amdp_core::mdp::sup_distance;
use amdp_core::{bellman_operator, evaluate_discounted, greedy_policy, span, DiscountFactor, Policy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(seed: u64) -> RandomSpec {
    RandomSpec {
        n_states: 2 + (seed % 5) as usize,
        n_actions: 1 + (seed % 3) as usize,
        seed,
        sparsity: 0.3,
        rewards: RewardStyle::Uniform,
    }
}

proptest! {
    #[test]
    fn span_is_shift_invariant(v in prop::collection::vec(-1e3f64..1e3, 1..20), c in -1e3f64..1e3) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let a = span(&v).unwrap();
        let b = span(&shifted).unwrap();
        prop_assert!(a >= 0.0);
        // exact in real arithmetic; allow the rounding of the additions
        prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * (v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c.abs()));
    }

    #[test]
    fn exact_evaluation_residual(seed in 0u64..500, gamma in 0.0f64..0.995) {
        let m = random_instance(&spec(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pi = Policy::new((0..m.n_states()).map(|_| rng.random_range(0..m.n_actions())).collect(), m.n_actions()).unwrap();
        let g = DiscountFactor::from_gamma(gamma).unwrap();
        let v = evaluate_discounted(&m, &pi, g).unwrap();
        for s in 0..m.n_states() {
            let rhs = m.q_value(s, pi[s], gamma, &v);
            prop_assert!((v[s] - rhs).abs() <= 1e-10);
            prop_assert!(v[s] >= -1e-9 && v[s] <= g.horizon() + 1e-9);
        }
    }
}

#[test]
fn bellman_operator_is_monotone_and_contractive() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for pair in 0..100u64 {
        let m = random_instance(&spec(pair)).unwrap();
        let gamma = [0.5, 0.9, 0.99][pair as usize % 3];
        let g = DiscountFactor::from_gamma(gamma).unwrap();
        let v: Vec<f64> = (0..m.n_states()).map(|_| rng.random_range(-5.0..5.0)).collect();
        let w: Vec<f64> = v.iter().map(|x| x + rng.random_range(0.0..3.0)).collect();
        let tv = bellman_operator(&m, g, &v).unwrap();
        let tw = bellman_operator(&m, g, &w).unwrap();
        assert!(
            tv.iter().zip(tw.iter()).all(|(a, b)| a <= b),
            "monotonicity, pair {pair}"
        );

        let u: Vec<f64> = (0..m.n_states()).map(|_| rng.random_range(-5.0..5.0)).collect();
        let tu = bellman_operator(&m, g, &u).unwrap();
        assert!(
            sup_distance(&tv, &tu) <= gamma * sup_distance(&v, &u) + 1e-12,
            "contraction, pair {pair}"
        );
    }
}

#[test]
fn optimal_value_is_a_bellman_fixed_point() {
    for seed in 0..20 {
        let m = random_instance(&spec(seed)).unwrap();
        let g = DiscountFactor::from_gamma(0.9).unwrap();
        let (v_star, _) = optimal_discounted_value(&m, g).unwrap();
        let tv = bellman_operator(&m, g, &v_star).unwrap();
        assert!(sup_distance(&tv, &v_star) <= 1e-10);
    }
}

#[test]
fn figure3_greedy_prefers_up_at_long_horizon() {
    let m = figure3(10).unwrap();
    let g = DiscountFactor::from_gamma(0.99).unwrap();
    let (v_star, _) = optimal_discounted_value(&m, g).unwrap();
    let up = m.q_value(0, 0, 0.99, &v_star);
    let down = m.q_value(0, 1, 0.99, &v_star);
    assert!(up > down);
    assert_eq!(greedy_policy(&m, g, &v_star).unwrap()[0], 0);
}
