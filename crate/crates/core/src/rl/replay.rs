use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Experience;
use crate::error::{Error, Result};

/// Bounded FIFO of experiences; the oldest entry is evicted first.
#[derive(Clone, Debug)]
pub struct Ring {
    items: VecDeque<Experience>,
    capacity: usize,
}

impl Ring {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ring capacity must be positive");
        Self { items: VecDeque::new(), capacity }
    }

    pub fn push(&mut self, exp: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(exp);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    /// `count` uniform draws with replacement.
    fn sample_into<'a, R: Rng + ?Sized>(&'a self, count: usize, rng: &mut R, out: &mut Vec<&'a Experience>) {
        for _ in 0..count {
            out.push(&self.items[rng.random_range(0..self.items.len())]);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayKind {
    Large,
    Small,
    LongTermShortTerm,
    MultiBuffer,
}

impl ReplayKind {
    pub fn name(&self) -> &'static str {
        match self {
            ReplayKind::Large => "large",
            ReplayKind::Small => "small",
            ReplayKind::LongTermShortTerm => "long_term_short_term",
            ReplayKind::MultiBuffer => "multi_buffer",
        }
    }
}

impl std::str::FromStr for ReplayKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "large" => Ok(ReplayKind::Large),
            "small" => Ok(ReplayKind::Small),
            "long_term_short_term" | "ltst" => Ok(ReplayKind::LongTermShortTerm),
            "multi_buffer" | "multi" => Ok(ReplayKind::MultiBuffer),
            other => Err(Error::config(format!("unknown replay strategy '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayCapacities {
    pub large: usize,
    pub small: usize,
    pub per_env: usize,
}

impl Default for ReplayCapacities {
    /// The large ring keeps everything; the others hold a million entries.
    fn default() -> Self {
        Self { large: usize::MAX, small: 1_000_000, per_env: 1_000_000 }
    }
}

/// The four buffering strategies for off-policy learning across workloads.
#[derive(Clone, Debug)]
pub enum ReplayStrategy {
    /// Keeps (practically) everything.
    Large(Ring),
    /// Keeps only recent experience.
    Small(Ring),
    /// A large and a small ring, each receiving every experience and each
    /// supplying half of every minibatch.
    LongTermShortTerm { long: Ring, short: Ring },
    /// One ring per environment index, sampled in equal shares.
    MultiBuffer { per_env: usize, rings: BTreeMap<usize, Ring> },
}

impl ReplayStrategy {
    pub fn new(kind: ReplayKind, caps: ReplayCapacities) -> Self {
        match kind {
            ReplayKind::Large => ReplayStrategy::Large(Ring::new(caps.large)),
            ReplayKind::Small => ReplayStrategy::Small(Ring::new(caps.small)),
            ReplayKind::LongTermShortTerm => ReplayStrategy::LongTermShortTerm {
                long: Ring::new(caps.large),
                short: Ring::new(caps.small),
            },
            ReplayKind::MultiBuffer => ReplayStrategy::MultiBuffer { per_env: caps.per_env, rings: BTreeMap::new() },
        }
    }

    pub fn kind(&self) -> ReplayKind {
        match self {
            ReplayStrategy::Large(_) => ReplayKind::Large,
            ReplayStrategy::Small(_) => ReplayKind::Small,
            ReplayStrategy::LongTermShortTerm { .. } => ReplayKind::LongTermShortTerm,
            ReplayStrategy::MultiBuffer { .. } => ReplayKind::MultiBuffer,
        }
    }

    pub fn insert(&mut self, exp: Experience) {
        match self {
            ReplayStrategy::Large(ring) | ReplayStrategy::Small(ring) => ring.push(exp),
            ReplayStrategy::LongTermShortTerm { long, short } => {
                short.push(exp.clone());
                long.push(exp);
            }
            ReplayStrategy::MultiBuffer { per_env, rings } => {
                let cap = *per_env;
                rings.entry(exp.env).or_insert_with(|| Ring::new(cap)).push(exp);
            }
        }
    }

    /// Total stored experiences (counting duplicates across rings).
    pub fn len(&self) -> usize {
        match self {
            ReplayStrategy::Large(r) | ReplayStrategy::Small(r) => r.len(),
            ReplayStrategy::LongTermShortTerm { long, short } => long.len() + short.len(),
            ReplayStrategy::MultiBuffer { rings, .. } => rings.values().map(Ring::len).sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Draws a minibatch (with replacement) following the strategy's rule.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Experience>> {
        if self.is_empty() {
            return Err(Error::data("cannot sample from empty replay buffers"));
        }
        let mut out = Vec::with_capacity(batch);
        match self {
            ReplayStrategy::Large(r) | ReplayStrategy::Small(r) => r.sample_into(batch, rng, &mut out),
            ReplayStrategy::LongTermShortTerm { long, short } => {
                if short.is_empty() {
                    long.sample_into(batch, rng, &mut out);
                } else if long.is_empty() {
                    short.sample_into(batch, rng, &mut out);
                } else {
                    let from_short = batch / 2;
                    long.sample_into(batch - from_short, rng, &mut out);
                    short.sample_into(from_short, rng, &mut out);
                }
            }
            ReplayStrategy::MultiBuffer { rings, .. } => {
                let k = rings.len();
                let (share, rem) = (batch / k, batch % k);
                for (i, ring) in rings.values().enumerate() {
                    ring.sample_into(share + usize::from(i < rem), rng, &mut out);
                }
            }
        }
        Ok(out)
    }

    /// Number of experiences held per environment index (unique rings only
    /// for multi-buffer; other strategies report their constituent rings).
    pub fn ring_sizes(&self) -> Vec<(String, usize)> {
        match self {
            ReplayStrategy::Large(r) => vec![("large".into(), r.len())],
            ReplayStrategy::Small(r) => vec![("small".into(), r.len())],
            ReplayStrategy::LongTermShortTerm { long, short } => {
                vec![("long".into(), long.len()), ("short".into(), short.len())]
            }
            ReplayStrategy::MultiBuffer { rings, .. } => {
                rings.iter().map(|(env, r)| (format!("env{env}"), r.len())).collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(id: usize, env: usize) -> Experience {
        Experience { state: vec![id as f64], action: 0, reward: 0.0, next_state: vec![], done: false, env }
    }

    fn ids(r: &Ring) -> Vec<usize> {
        r.iter().map(|x| x.state[0] as usize).collect()
    }

    fn caps(large: usize, small: usize) -> ReplayCapacities {
        ReplayCapacities { large, small, per_env: 100 }
    }

    #[test]
    fn small_ring_is_fifo() {
        let mut s = ReplayStrategy::new(ReplayKind::Small, caps(10, 2));
        for i in 1..=3 {
            s.insert(e(i, 0));
        }
        let ReplayStrategy::Small(r) = &s else { unreachable!() };
        assert_eq!(ids(r), vec![2, 3]);
    }

    #[test]
    fn multi_buffer_creates_rings_per_env() {
        let mut s = ReplayStrategy::new(ReplayKind::MultiBuffer, caps(10, 2));
        for (i, env) in [0, 1, 0].into_iter().enumerate() {
            s.insert(e(i, env));
        }
        assert_eq!(s.ring_sizes(), vec![("env0".to_string(), 2), ("env1".to_string(), 1)]);
    }

    #[test]
    fn long_term_short_term_keeps_both_views() {
        let mut s = ReplayStrategy::new(ReplayKind::LongTermShortTerm, caps(10, 2));
        for i in 0..5 {
            s.insert(e(i, 0));
        }
        let ReplayStrategy::LongTermShortTerm { long, short } = &s else { unreachable!() };
        assert_eq!(ids(short), vec![3, 4]);
        assert_eq!(ids(long), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn long_term_short_term_splits_batch_evenly() {
        let mut s = ReplayStrategy::new(ReplayKind::LongTermShortTerm, caps(10, 2));
        for i in 0..5 {
            s.insert(e(i, 0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = s.sample(8, &mut rng).unwrap();
        // the long half comes first; the short half only holds ids 3 and 4
        assert!(b[4..].iter().all(|x| x.state[0] >= 3.0));
        assert_eq!(b.len(), 8);
    }

    #[test]
    fn multi_buffer_equal_shares() {
        let mut s = ReplayStrategy::new(ReplayKind::MultiBuffer, caps(10, 2));
        for i in 0..30 {
            s.insert(e(i, i % 3));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = s.sample(9, &mut rng).unwrap();
        for env in 0..3 {
            assert_eq!(b.iter().filter(|x| x.env == env).count(), 3);
        }
    }

    #[test]
    fn single_element_is_sampled_with_replacement() {
        let mut s = ReplayStrategy::new(ReplayKind::Large, caps(10, 2));
        s.insert(e(7, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = s.sample(4, &mut rng).unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.iter().all(|x| x.state[0] == 7.0));
    }

    #[test]
    fn empty_buffers_cannot_be_sampled() {
        let s = ReplayStrategy::new(ReplayKind::MultiBuffer, caps(10, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(s.sample(4, &mut rng).is_err());
    }

    #[test]
    fn empty_short_ring_falls_back_to_long() {
        let mut s = ReplayStrategy::new(ReplayKind::LongTermShortTerm, caps(10, 2));
        if let ReplayStrategy::LongTermShortTerm { long, .. } = &mut s {
            long.push(e(1, 0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(s.sample(6, &mut rng).unwrap().len(), 6);
    }
}
