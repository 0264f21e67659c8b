//! A DeepSets policy gives the same action distribution however the servers
//! are ordered, which lets one network serve any server permutation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvrl::nn::{Activation, DeepSets};
use tvrl::Result;

const SERVERS: usize = 10;
const TAIL: usize = 5;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = DeepSets::new(SERVERS, 2, TAIL, &[32, 32], &[32], 7, Activation::Softmax, &mut rng)?;
    let queues: Vec<Vec<f64>> =
        (0..SERVERS).map(|_| vec![rng.random_range(0.0..40.0), rng.random_range(0.0..40.0)]).collect();
    let tail: Vec<f64> = (0..TAIL).map(|_| rng.random_range(-1.0..1.0)).collect();
    let reference = net.encode_set(&queues, &tail)?;
    println!("action probabilities: {:?}", reference.iter().map(|p| format!("{p:.4}")).collect::<Vec<_>>());
    let mut shuffled = queues.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        shuffled.shuffle(&mut rng);
        let out = net.encode_set(&shuffled, &tail)?;
        worst = out.iter().zip(&reference).fold(worst, |w, (a, b)| w.max((a - b).abs()));
    }
    println!("largest change over 100 server orderings: {worst:.2e}");
    Ok(())
}
