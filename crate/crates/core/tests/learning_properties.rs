use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvrl::nn::{Activation, AdamConfig, DeepSets, Mlp, Net, Network};
use tvrl::rl::{
    DqnConfig, DqnLearner, EpsilonSchedule, Experience, LinearSchedule, OnPolicyBatch, ReplayCapacities,
    ReplayKind, ReplayStrategy, RewardScaler, Ring, Rollout,
};

fn exp(tag: usize, env: usize) -> Experience {
    Experience { state: vec![tag as f64], action: 0, reward: tag as f64, next_state: vec![0.0], done: false, env }
}

fn caps(large: usize, small: usize, per_env: usize) -> ReplayCapacities {
    ReplayCapacities { large, small, per_env }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_heads_always_normalize(seed in any::<u64>(), input in prop::collection::vec(-50.0..50.0f64, 6)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::new(&[6, 16, 16, 5], Activation::Softmax, &mut rng).unwrap();
        let p = net.forward(&input).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn deepsets_gradients_ignore_element_order(seed in any::<u64>(), shift in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = DeepSets::new(5, 2, 3, &[8], &[8], 4, Activation::Softmax, &mut rng).unwrap();
        let input: Vec<f64> = (0..13).map(|i| ((seed >> (i % 60)) & 0xff) as f64 / 64.0).collect();
        let mut rotated = input.clone();
        for f in 0..2 {
            for i in 0..5 {
                rotated[f * 5 + (i + shift) % 5] = input[f * 5 + i];
            }
        }
        let grad_of = |x: &[f64]| {
            let mut tape = Default::default();
            net.forward_taped(x, &mut tape).unwrap();
            let mut g = vec![0.0; net.num_params()];
            net.backward(&tape, &[1.0, -0.5, 0.25, 2.0], &mut g).unwrap();
            g
        };
        for (a, b) in grad_of(&input).iter().zip(grad_of(&rotated)) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn entropy_schedule_decays_to_exact_zero(start in 0.0..1.0f64, span in 1usize..5000, epoch in 0usize..10000) {
        let s = LinearSchedule { start, span };
        prop_assert!(s.value(epoch + 1) <= s.value(epoch));
        prop_assert_eq!(s.value(span), 0.0);
        prop_assert_eq!(s.value(span + epoch), 0.0);
    }

    #[test]
    fn rings_stay_within_capacity_and_evict_oldest(capacity in 1usize..20, inserts in 0usize..60) {
        let mut ring = Ring::new(capacity);
        for i in 0..inserts {
            ring.push(exp(i, 0));
        }
        prop_assert!(ring.len() <= capacity);
        let kept: Vec<usize> = ring.iter().map(|e| e.reward as usize).collect();
        let expected: Vec<usize> = (inserts.saturating_sub(capacity)..inserts).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn multi_buffer_opens_one_ring_per_environment(envs in prop::collection::vec(0usize..6, 1..40)) {
        let mut replay = ReplayStrategy::new(ReplayKind::MultiBuffer, caps(100, 10, 100));
        for (i, &env) in envs.iter().enumerate() {
            replay.insert(exp(i, env));
        }
        let mut distinct = envs.clone();
        distinct.sort_unstable();
        distinct.dedup();
        prop_assert_eq!(replay.ring_sizes().len(), distinct.len());
        let mut rng = ChaCha8Rng::seed_from_u64(envs.len() as u64);
        let batch = replay.sample(distinct.len() * 4, &mut rng).unwrap();
        for env in distinct {
            prop_assert_eq!(batch.iter().filter(|e| e.env == env).count(), 4);
        }
    }

    #[test]
    fn frozen_scales_never_move(rewards in prop::collection::vec(-3000.0..-0.5f64, 1..50), later in -1e4..1e4f64) {
        let mut scaler = RewardScaler::new(true);
        let scaled: Vec<f64> = rewards.iter().map(|&r| scaler.scale_reward(0, r)).collect();
        scaler.freeze(0);
        let frozen = scaler.scale_of(0);
        scaler.scale_reward(0, later);
        scaler.freeze(0);
        prop_assert_eq!(scaler.scale_of(0), frozen);
        // the running median keeps calibration-time rewards near unit size
        let mut magnitudes: Vec<f64> = scaled.iter().map(|r| r.abs()).collect();
        magnitudes.sort_by(f64::total_cmp);
        let median = tvrl::stats::median(&magnitudes).unwrap();
        prop_assert!((0.5..=2.0).contains(&median), "median scaled magnitude {}", median);
    }

    #[test]
    fn target_network_tracks_a_convex_combination(seed in any::<u64>(), steps in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = Net::Mlp(Mlp::new(&[2, 4, 2], Activation::Identity, &mut rng).unwrap());
        let start = online.params().to_vec();
        let mut learner = DqnLearner::from_net(online, DqnConfig::default());
        let batch = [exp(1, 0)];
        let mut low = start.clone();
        let mut high = start;
        for _ in 0..steps {
            let data = Experience { state: vec![0.3, -0.2], next_state: vec![0.1, 0.4], ..batch[0].clone() };
            learner.update(&[&data]).unwrap();
            for ((lo, hi), &p) in low.iter_mut().zip(high.iter_mut()).zip(learner.online.params()) {
                *lo = lo.min(p);
                *hi = hi.max(p);
            }
            for ((&t, lo), hi) in learner.target.params().iter().zip(&low).zip(&high) {
                prop_assert!(t >= lo - 1e-12 && t <= hi + 1e-12);
            }
        }
    }
}

#[test]
fn small_and_large_rings_hold_the_declared_contents() {
    let mut replay = ReplayStrategy::new(ReplayKind::LongTermShortTerm, caps(10, 2, 0));
    for i in 0..5 {
        replay.insert(exp(i, 0));
    }
    let sizes = replay.ring_sizes();
    assert_eq!(sizes.iter().map(|(_, n)| *n).collect::<Vec<_>>(), vec![5, 2]);
}

#[test]
fn sampling_proportions_pass_a_chi_square_test() {
    // long ring holds tags 0..8, short ring tags 6 and 7: every batch of 8
    // takes 4 uniform draws from each, so tag 0 has probability 4/8 * 1/8
    let mut replay = ReplayStrategy::new(ReplayKind::LongTermShortTerm, caps(100, 2, 0));
    for i in 0..8 {
        replay.insert(exp(i, 0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut counts = [0usize; 8];
    let draws = 10_000;
    for _ in 0..draws / 8 {
        for e in replay.sample(8, &mut rng).unwrap() {
            counts[e.reward as usize] += 1;
        }
    }
    let expected: Vec<f64> =
        (0..8).map(|i| draws as f64 * (0.5 / 8.0 + if i >= 6 { 0.5 / 2.0 } else { 0.0 })).collect();
    let chi2: f64 = counts.iter().zip(&expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum();
    // 7 degrees of freedom, 0.1% critical value
    assert!(chi2 < 24.32, "chi-square {chi2}, counts {counts:?}");
}

#[test]
fn double_dqn_differs_from_vanilla_on_a_crafted_table() {
    // online prefers action 0 at s', the target rates action 1 higher:
    // vanilla DQN would bootstrap from 10, double DQN from 1
    let q_net = |params: Vec<f64>| Net::Mlp(Mlp::from_params(&[1, 2], Activation::Identity, params).unwrap());
    let mut learner = DqnLearner::from_net(q_net(vec![0.0, 0.0, 3.0, 2.0]), DqnConfig { gamma: 0.5, ..DqnConfig::default() });
    learner.target = q_net(vec![0.0, 0.0, 1.0, 10.0]);
    let e = Experience { state: vec![1.0], action: 1, reward: 0.0, next_state: vec![1.0], done: false, env: 0 };
    assert_eq!(learner.target_value(&e).unwrap(), 0.5);
    let vanilla = 0.5 * learner.target.forward(&e.next_state).unwrap().into_iter().fold(f64::MIN, f64::max);
    assert_ne!(learner.target_value(&e).unwrap(), vanilla);
}

#[test]
fn epsilon_greedy_is_uniform_then_greedy() {
    let net = Net::Mlp(Mlp::from_params(&[1, 3], Activation::Identity, vec![0.0, 0.0, 0.0, 0.1, 0.9, 0.2]).unwrap());
    let schedule = EpsilonSchedule { random_epochs: 10, decay_epochs: 100 };
    let learner = DqnLearner::from_net(net, DqnConfig { epsilon: schedule, ..DqnConfig::default() });
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 10_000;
    let mut counts = [0usize; 3];
    for _ in 0..draws {
        counts[learner.act(&[1.0], schedule.value(0), &mut rng).unwrap()] += 1;
    }
    let p = 1.0 / 3.0;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - draws as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
    }
    let end = schedule.random_epochs + schedule.decay_epochs;
    assert_eq!(schedule.value(end), 0.0);
    for _ in 0..1000 {
        assert_eq!(learner.act(&[1.0], schedule.value(end), &mut rng).unwrap(), 1);
    }
}

#[test]
fn on_policy_batches_are_single_use() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let actor = Net::Mlp(Mlp::new(&[2, 4, 2], Activation::Softmax, &mut rng).unwrap());
    let critic = Net::Mlp(Mlp::new(&[2, 4, 1], Activation::Identity, &mut rng).unwrap());
    let mut learner = tvrl::rl::A2cLearner::from_nets(actor, critic, Default::default()).unwrap();
    let mut rollout = Rollout::default();
    rollout.push(vec![0.1, 0.2], 1, 1.0);
    let mut batch = OnPolicyBatch::new(vec![rollout]);
    learner.update(&mut batch, 0.0).unwrap();
    assert!(batch.is_consumed());
    assert!(matches!(learner.update(&mut batch, 0.0), Err(tvrl::Error::Usage(_))));
}

#[test]
fn adam_without_decay_leaves_zero_gradients_alone() {
    let mut state = tvrl::nn::AdamState::new(AdamConfig { weight_decay: 0.0, ..AdamConfig::default() }, 3);
    let mut params = [0.5, -1.0, 2.0];
    state.step(&mut params, &[0.0; 3]).unwrap();
    assert_eq!(params, [0.5, -1.0, 2.0]);
}
