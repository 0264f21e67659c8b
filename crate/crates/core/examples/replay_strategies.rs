//! Feeds the same stream (a long stretch of workload 0, then a short one of
//! workload 1) to each replay strategy and shows what a minibatch contains.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvrl::rl::{Experience, ReplayCapacities, ReplayKind, ReplayStrategy};
use tvrl::Result;

fn experience(env: usize) -> Experience {
    Experience { state: vec![0.0], action: 0, reward: 0.0, next_state: vec![0.0], done: false, env }
}

fn main() -> Result<()> {
    let caps = ReplayCapacities { large: usize::MAX, small: 500, per_env: 500 };
    let stream = std::iter::repeat_n(0, 5000).chain(std::iter::repeat_n(1, 300));
    for kind in [ReplayKind::Large, ReplayKind::Small, ReplayKind::LongTermShortTerm, ReplayKind::MultiBuffer] {
        let mut replay = ReplayStrategy::new(kind, caps);
        stream.clone().for_each(|env| replay.insert(experience(env)));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut from_new = 0;
        let draws = 100;
        for _ in 0..draws {
            from_new += replay.sample(64, &mut rng)?.iter().filter(|e| e.env == 1).count();
        }
        println!(
            "{:<20} rings {:?}  share of the new workload per batch {:.2}",
            kind.name(),
            replay.ring_sizes(),
            from_new as f64 / (64 * draws) as f64
        );
    }
    Ok(())
}
