//! Independent reference computations shared by the oracle and acceptance tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvrl::nn::{Activation, AdamConfig, DeepSets, Mlp, Net, Network};
use tvrl::rl::{compute_gae, A2cConfig, A2cLearner, DqnConfig, DqnLearner, EpsilonSchedule, Experience};

/// Exponentially weighted mix of k-step advantages, truncated at the end of
/// the trajectory where the longest estimator takes the remaining weight.
pub fn gae_brute_force(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let horizon = n - t;
            let k_step = |k: usize| {
                let discounted: f64 = (0..k).map(|l| gamma.powi(l as i32) * rewards[t + l]).sum();
                discounted + gamma.powi(k as i32) * values[t + k] - values[t]
            };
            let mut total = 0.0;
            for k in 1..horizon {
                total += (1.0 - lambda) * lambda.powi(k as i32 - 1) * k_step(k);
            }
            total + lambda.powi(horizon as i32 - 1) * k_step(horizon)
        })
        .collect()
}

/// Largest deviation of `compute_gae` from the brute-force mix over random
/// 10-step trajectories.
pub fn gae_max_error(trajectories: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trajectories {
        let rewards: Vec<f64> = (0..10).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut values: Vec<f64> = (0..11).map(|_| rng.random_range(-5.0..5.0)).collect();
        if rng.random_bool(0.5) {
            values[10] = 0.0;
        }
        let gamma = rng.random_range(0.5..1.0);
        let lambda = rng.random_range(0.0..1.0);
        let (adv, ret) = compute_gae(&rewards, &values, gamma, lambda).unwrap();
        let oracle = gae_brute_force(&rewards, &values, gamma, lambda);
        for t in 0..10 {
            worst = worst.max((adv[t] - oracle[t]).abs());
            worst = worst.max((ret[t] - (oracle[t] + values[t])).abs());
        }
    }
    worst
}

/// Relative error with a small absolute floor so that exactly-zero
/// gradients (dead ReLUs) compare cleanly.
fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central differences of `loss` around `params`, compared against `grads`.
fn finite_difference_error(
    params: &mut [f64],
    grads: &[f64],
    step: f64,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let saved = params[i];
        params[i] = saved + step;
        let up = loss(params);
        params[i] = saved - step;
        let down = loss(params);
        params[i] = saved;
        worst = worst.max(relative_error(grads[i], (up - down) / (2.0 * step)));
    }
    worst
}

fn random_states(rng: &mut ChaCha8Rng, count: usize, width: usize) -> Vec<Vec<f64>> {
    (0..count).map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn learner_with(actor: Net, critic: Net) -> A2cLearner {
    A2cLearner::from_nets(actor, critic, A2cConfig::default()).unwrap()
}

/// Worst relative error of the actor and critic gradients against central
/// differences, for MLPs with one and two hidden layers and a DeepSets pair.
pub fn a2c_gradient_max_error(seed: u64) -> f64 {
    const STEP: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut pairs: Vec<(Net, Net, usize)> = Vec::new();
    for hidden in [vec![8], vec![16, 12]] {
        let mut actor_widths = vec![5];
        actor_widths.extend(&hidden);
        let mut critic_widths = actor_widths.clone();
        actor_widths.push(4);
        critic_widths.push(1);
        pairs.push((
            Net::Mlp(Mlp::new(&actor_widths, Activation::Softmax, &mut rng).unwrap()),
            Net::Mlp(Mlp::new(&critic_widths, Activation::Identity, &mut rng).unwrap()),
            5,
        ));
    }
    pairs.push((
        Net::DeepSets(DeepSets::new(4, 2, 3, &[8], &[8], 4, Activation::Softmax, &mut rng).unwrap()),
        Net::DeepSets(DeepSets::new(4, 2, 3, &[8], &[8], 1, Activation::Identity, &mut rng).unwrap()),
        11,
    ));

    for (actor, critic, width) in pairs {
        let states = random_states(&mut rng, 12, width);
        let actions: Vec<usize> = (0..12).map(|_| rng.random_range(0..4)).collect();
        let advantages: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let returns: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let learner = learner_with(actor, critic);

        let (_, actor_grads, _) = learner.actor_loss_and_grad(&states, &actions, &advantages, 0.05).unwrap();
        let mut probe = learner.clone();
        let mut params = learner.actor.params().to_vec();
        worst = worst.max(finite_difference_error(&mut params, &actor_grads, STEP, |p| {
            probe.actor.params_mut().copy_from_slice(p);
            probe.actor_loss_and_grad(&states, &actions, &advantages, 0.05).unwrap().0
        }));

        let (_, critic_grads) = learner.critic_loss_and_grad(&states, &returns).unwrap();
        let mut params = learner.critic.params().to_vec();
        worst = worst.max(finite_difference_error(&mut params, &critic_grads, STEP, |p| {
            probe.critic.params_mut().copy_from_slice(p);
            probe.critic_loss_and_grad(&states, &returns).unwrap().0
        }));
    }
    worst
}

/// Three states in a row; action 0 moves right (leaving state 2 ends the
/// episode with reward 1), action 1 moves left (state 0 stays put).
pub const CHAIN_GAMMA: f64 = 0.9;

fn chain_step(state: usize, action: usize) -> (f64, Option<usize>) {
    match (state, action) {
        (2, 0) => (1.0, None),
        (s, 0) => (0.0, Some(s + 1)),
        (s, _) => (0.0, Some(s.saturating_sub(1))),
    }
}

fn one_hot(state: usize) -> Vec<f64> {
    let mut v = vec![0.0; 3];
    v[state] = 1.0;
    v
}

/// Value iteration on the chain to machine precision.
pub fn chain_value_iteration() -> [[f64; 2]; 3] {
    let mut q = [[0.0_f64; 2]; 3];
    for _ in 0..1000 {
        let v: Vec<f64> = q.iter().map(|row| row[0].max(row[1])).collect();
        for (s, row) in q.iter_mut().enumerate() {
            for (a, slot) in row.iter_mut().enumerate() {
                let (r, next) = chain_step(s, a);
                *slot = r + next.map_or(0.0, |n| CHAIN_GAMMA * v[n]);
            }
        }
    }
    q
}

/// Trains a double DQN on every chain transition and returns the largest
/// gap to the value-iteration fixed point.
pub fn ddqn_chain_max_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = DqnConfig {
        gamma: CHAIN_GAMMA,
        polyak: 0.05,
        batch_size: 6,
        epsilon: EpsilonSchedule { random_epochs: 0, decay_epochs: 1 },
        adam: AdamConfig { lr: 0.003, weight_decay: 0.0, ..AdamConfig::default() },
    };
    let online = Net::Mlp(Mlp::new(&[3, 16, 2], Activation::Identity, &mut rng).unwrap());
    let mut learner = DqnLearner::from_net(online, config);
    let transitions: Vec<Experience> = (0..3)
        .flat_map(|s| (0..2).map(move |a| (s, a)))
        .map(|(s, a)| {
            let (reward, next) = chain_step(s, a);
            Experience {
                state: one_hot(s),
                action: a,
                reward,
                next_state: one_hot(next.unwrap_or(s)),
                done: next.is_none(),
                env: 0,
            }
        })
        .collect();
    let batch: Vec<&Experience> = transitions.iter().collect();
    for _ in 0..6000 {
        learner.update(&batch).unwrap();
    }
    let oracle = chain_value_iteration();
    let mut worst: f64 = 0.0;
    for (s, row) in oracle.iter().enumerate() {
        let q = learner.q_values(&one_hot(s)).unwrap();
        for a in 0..2 {
            worst = worst.max((q[a] - row[a]).abs());
        }
    }
    worst
}

/// Largest output change of a DeepSets network under random reorderings of
/// its set elements.
pub fn deepsets_permutation_max_diff(permutations: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let servers = 10;
    let net = DeepSets::new(servers, 2, 5, &[32, 32], &[32], 7, Activation::Softmax, &mut rng).unwrap();
    let elements: Vec<Vec<f64>> =
        (0..servers).map(|_| vec![rng.random_range(0.0..40.0), rng.random_range(0.0..40.0)]).collect();
    let tail: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let flat = |els: &[Vec<f64>]| {
        let mut input = vec![0.0; 2 * servers + 5];
        for (i, e) in els.iter().enumerate() {
            input[i] = e[0];
            input[servers + i] = e[1];
        }
        input[2 * servers..].copy_from_slice(&tail);
        input
    };
    let reference = net.forward(&flat(&elements)).unwrap();
    let mut order: Vec<usize> = (0..servers).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..permutations {
        order.shuffle(&mut rng);
        let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| elements[i].clone()).collect();
        let out = net.forward(&flat(&shuffled)).unwrap();
        let encoded = net.encode_set(&shuffled, &tail).unwrap();
        for ((a, b), c) in out.iter().zip(&reference).zip(&encoded) {
            worst = worst.max((a - b).abs()).max((c - b).abs());
        }
    }
    worst
}

/// The closed-form unit examples: each entry names the example and whether
/// it reproduced exactly (or to the stated tolerance).
pub fn formula_suite() -> Vec<(&'static str, bool)> {
    use tvrl::abr::{bba_action, buffer_update, qoe, BBA_CUSHION_SECS, BBA_RESERVOIR_SECS, REBUFFER_PENALTY};
    use tvrl::nn::AdamState;

    let default_ladder = [300.0, 750.0, 1200.0, 1850.0, 2850.0, 4300.0];
    let linear_ladder = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0];
    let bba = |buffer: f64, ladder: &[f64]| bba_action(buffer, ladder, BBA_RESERVOIR_SECS, BBA_CUSHION_SECS);

    let mut checks = vec![
        ("buffer update without stall", buffer_update(8.0, 3.0, 4.0) == (9.0, 0.0)),
        ("buffer update with a 3 s stall", buffer_update(2.0, 5.0, 4.0) == (4.0, 3.0)),
        ("empty buffer stalls for the whole download", buffer_update(0.0, 2.75, 4.0) == (4.0, 2.75)),
        ("qoe with a quality drop", qoe(3.0, 5.0, 2.0, 4.0, REBUFFER_PENALTY) == 1.0),
        ("qoe with a stall", (qoe(1.0, 1.0, 6.0, 4.0, REBUFFER_PENALTY) + 7.6).abs() < 1e-12),
        ("qoe without penalty or change is the quality", qoe(2.5, 2.5, 9.0, 1.0, 0.0) == 2.5),
        ("bba inside the reservoir", bba(2.0, &default_ladder) == 0),
        ("bba above reservoir plus cushion", bba(20.0, &default_ladder) == 5),
        ("bba midpoint on a linear ladder", bba(10.0, &linear_ladder) == 2),
        ("bba midpoint on the default ladder", bba(10.0, &default_ladder) == 3),
        ("gae two-step hand recursion", {
            let (adv, _) = compute_gae(&[1.0, 1.0], &[0.0, 0.0, 0.0], 0.9, 0.95).unwrap();
            (adv[0] - 1.855).abs() < 1e-12 && adv[1] == 1.0
        }),
        ("adam first step", {
            let mut state = AdamState::new(AdamConfig { weight_decay: 0.0, ..AdamConfig::default() }, 1);
            let mut param = [0.0];
            state.step(&mut param, &[0.5]).unwrap();
            (param[0] + 0.001).abs() < 1e-9
        }),
    ];

    let q_net = |params: Vec<f64>| Net::Mlp(Mlp::from_params(&[1, 2], Activation::Identity, params).unwrap());
    let config = DqnConfig { gamma: 0.9, ..DqnConfig::default() };
    let mut learner = DqnLearner::from_net(q_net(vec![0.0, 0.0, 1.0, 2.0]), config);
    learner.target = q_net(vec![0.0, 0.0, 9.0, 5.0]);
    let mut exp = Experience { state: vec![0.0], action: 0, reward: 2.0, next_state: vec![1.0], done: false, env: 0 };
    checks.push(("double dqn target", learner.target_value(&exp).unwrap() == 6.5));
    exp.done = true;
    checks.push(("terminal target is the reward", learner.target_value(&exp).unwrap() == 2.0));

    let alpha = learner.config.polyak;
    let distance = |l: &DqnLearner| {
        l.online.params().iter().zip(l.target.params()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let start = distance(&learner);
    for _ in 0..50 {
        learner.soft_update();
    }
    let expected = start * (1.0 - alpha).powi(50);
    checks.push(("polyak decay over 50 updates", (distance(&learner) - expected).abs() <= 1e-12 * start));
    checks
}
