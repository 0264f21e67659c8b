//! Double DQN on a three-state chain with full-batch updates, compared with
//! the values found by value iteration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvrl::nn::{Activation, AdamConfig, Mlp, Net};
use tvrl::rl::{DqnConfig, DqnLearner, EpsilonSchedule, Experience};
use tvrl::Result;

const GAMMA: f64 = 0.9;

/// Action 0 moves right (leaving state 2 ends the episode with reward 1),
/// action 1 moves left.
fn step(state: usize, action: usize) -> (f64, Option<usize>) {
    match (state, action) {
        (2, 0) => (1.0, None),
        (s, 0) => (0.0, Some(s + 1)),
        (s, _) => (0.0, Some(s.saturating_sub(1))),
    }
}

fn one_hot(state: usize) -> Vec<f64> {
    (0..3).map(|i| if i == state { 1.0 } else { 0.0 }).collect()
}

fn value_iteration() -> [[f64; 2]; 3] {
    let mut q = [[0.0_f64; 2]; 3];
    for _ in 0..200 {
        let v: Vec<f64> = q.iter().map(|row| row[0].max(row[1])).collect();
        for (s, row) in q.iter_mut().enumerate() {
            for (a, value) in row.iter_mut().enumerate() {
                let (r, next) = step(s, a);
                *value = r + next.map_or(0.0, |n| GAMMA * v[n]);
            }
        }
    }
    q
}

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = DqnConfig {
        gamma: GAMMA,
        polyak: 0.05,
        batch_size: 6,
        epsilon: EpsilonSchedule { random_epochs: 0, decay_epochs: 1 },
        adam: AdamConfig { lr: 0.003, weight_decay: 0.0, ..AdamConfig::default() },
    };
    let mut learner = DqnLearner::from_net(Net::Mlp(Mlp::new(&[3, 16, 2], Activation::Identity, &mut rng)?), config);
    let transitions: Vec<Experience> = (0..3)
        .flat_map(|s| (0..2).map(move |a| (s, a)))
        .map(|(s, a)| {
            let (reward, next) = step(s, a);
            let next_state = one_hot(next.unwrap_or(s));
            Experience { state: one_hot(s), action: a, reward, next_state, done: next.is_none(), env: 0 }
        })
        .collect();
    let batch: Vec<&Experience> = transitions.iter().collect();
    for _ in 0..6000 {
        learner.update(&batch)?;
    }
    for (s, row) in value_iteration().iter().enumerate() {
        let q = learner.q_values(&one_hot(s))?;
        println!("state {s}: learned [{:.3}, {:.3}]  exact [{:.3}, {:.3}]", q[0], q[1], row[0], row[1]);
    }
    Ok(())
}
