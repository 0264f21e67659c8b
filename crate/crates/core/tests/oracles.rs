mod common;

use common::*;
use tvrl::rl::compute_gae;

#[test]
fn gae_matches_weighted_k_step_advantages() {
    assert!(gae_max_error(100, 1) < 1e-9);
}

#[test]
fn gae_brute_force_agrees_with_hand_recursion() {
    let oracle = gae_brute_force(&[1.0, 1.0], &[0.0, 0.0, 0.0], 0.9, 0.95);
    assert!((oracle[0] - 1.855).abs() < 1e-12);
    assert!((oracle[1] - 1.0).abs() < 1e-12);
}

#[test]
fn gae_with_zero_lambda_is_one_step_td() {
    let rewards = [0.5, -1.0, 2.0];
    let values = [0.1, 0.2, -0.3, 0.4];
    let (adv, _) = compute_gae(&rewards, &values, 0.9, 0.0).unwrap();
    for t in 0..3 {
        assert_eq!(adv[t], rewards[t] + 0.9 * values[t + 1] - values[t]);
    }
}

#[test]
fn actor_and_critic_gradients_match_finite_differences() {
    let worst = a2c_gradient_max_error(3);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn value_iteration_oracle_is_the_hand_solution() {
    let q = chain_value_iteration();
    let expected = [[0.81, 0.729], [0.9, 0.729], [1.0, 0.81]];
    for s in 0..3 {
        for a in 0..2 {
            assert!((q[s][a] - expected[s][a]).abs() < 1e-12);
        }
    }
}

#[test]
fn double_dqn_reaches_the_chain_fixed_point() {
    let worst = ddqn_chain_max_error(5);
    assert!(worst < 1e-2, "worst Q error {worst}");
}

#[test]
fn deepsets_output_ignores_server_order() {
    assert!(deepsets_permutation_max_diff(100, 9) < 1e-6);
}

#[test]
fn closed_form_examples_hold() {
    let failed: Vec<_> = formula_suite().into_iter().filter(|(_, ok)| !ok).map(|(name, _)| name).collect();
    assert!(failed.is_empty(), "failed: {failed:?}");
}
