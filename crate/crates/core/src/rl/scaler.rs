use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

/// Streaming median of non-negative finite values.
///
/// Non-negative finite `f64` bit patterns order the same way as the values,
/// so the two heaps can hold plain `u64`s.
#[derive(Clone, Debug, Default)]
struct RunningMedian {
    low: BinaryHeap<u64>,
    high: BinaryHeap<Reverse<u64>>,
}

impl RunningMedian {
    fn push(&mut self, x: f64) {
        debug_assert!(x >= 0.0 && x.is_finite());
        let bits = x.to_bits();
        match self.low.peek() {
            Some(&top) if bits > top => self.high.push(Reverse(bits)),
            _ => self.low.push(bits),
        }
        if self.low.len() > self.high.len() + 1 {
            let v = self.low.pop().unwrap();
            self.high.push(Reverse(v));
        } else if self.high.len() > self.low.len() {
            let Reverse(v) = self.high.pop().unwrap();
            self.low.push(v);
        }
    }

    fn median(&self) -> Option<f64> {
        let lo = f64::from_bits(*self.low.peek()?);
        if self.low.len() > self.high.len() {
            Some(lo)
        } else {
            let hi = f64::from_bits(self.high.peek()?.0);
            Some(0.5 * (lo + hi))
        }
    }

    fn len(&self) -> usize {
        self.low.len() + self.high.len()
    }
}

#[derive(Clone, Debug, Default)]
struct EnvScale {
    calibration: RunningMedian,
    frozen: Option<f64>,
}

/// Per-environment reward normalization for a network shared across
/// workloads whose rewards differ by orders of magnitude.
///
/// While an environment is calibrating, rewards are divided by the running
/// median absolute reward seen so far; [`RewardScaler::freeze`] fixes that
/// median as the environment's scale for good.
#[derive(Clone, Debug)]
pub struct RewardScaler {
    enabled: bool,
    envs: BTreeMap<usize, EnvScale>,
}

impl RewardScaler {
    pub fn new(enabled: bool) -> Self {
        Self { enabled, envs: BTreeMap::new() }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    fn estimate(scale: &EnvScale) -> f64 {
        match scale.frozen {
            Some(s) => s,
            None => match scale.calibration.median() {
                Some(m) if m > 0.0 => m,
                _ => 1.0,
            },
        }
    }

    pub fn scale_reward(&mut self, env: usize, raw: f64) -> f64 {
        if !self.enabled {
            return raw;
        }
        let scale = self.envs.entry(env).or_default();
        if scale.frozen.is_none() && raw.is_finite() {
            scale.calibration.push(raw.abs());
        }
        raw / Self::estimate(scale)
    }

    /// Current divisor for `env` (1 before any calibration data).
    pub fn scale_of(&self, env: usize) -> f64 {
        if !self.enabled {
            return 1.0;
        }
        self.envs.get(&env).map_or(1.0, Self::estimate)
    }

    /// Ends calibration for `env`. Later calls are no-ops.
    pub fn freeze(&mut self, env: usize) {
        if !self.enabled {
            return;
        }
        let scale = self.envs.entry(env).or_default();
        if scale.frozen.is_none() {
            scale.frozen = Some(Self::estimate(scale));
        }
    }

    /// Fixes `env`'s scale, e.g. to one carried over from pretraining.
    pub fn set_scale(&mut self, env: usize, scale: f64) {
        if self.enabled && scale > 0.0 && scale.is_finite() {
            self.envs.entry(env).or_default().frozen = Some(scale);
        }
    }

    pub fn is_frozen(&self, env: usize) -> bool {
        self.envs.get(&env).is_some_and(|s| s.frozen.is_some())
    }

    pub fn calibration_len(&self, env: usize) -> usize {
        self.envs.get(&env).map_or(0, |s| s.calibration.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_rewards_scale_to_unit() {
        let mut s = RewardScaler::new(true);
        for _ in 0..50 {
            s.scale_reward(0, -500.0);
        }
        s.freeze(0);
        assert_eq!(s.scale_reward(0, -500.0), -1.0);
    }

    #[test]
    fn environments_are_normalized_independently() {
        let mut s = RewardScaler::new(true);
        for i in 0..101 {
            let jitter = 1.0 + (i as f64 - 50.0) / 500.0;
            s.scale_reward(0, -500.0 * jitter);
            s.scale_reward(1, -10.0 * jitter);
        }
        s.freeze(0);
        s.freeze(1);
        // per-environment median oracle: both medians sit at jitter 1.0
        assert!((s.scale_reward(0, -500.0).abs() - 1.0).abs() < 1e-9);
        assert!((s.scale_reward(1, -10.0).abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn disabled_is_identity() {
        let mut s = RewardScaler::new(false);
        assert_eq!(s.scale_reward(3, -42.0), -42.0);
        s.freeze(3);
        assert_eq!(s.scale_reward(3, 7.0), 7.0);
    }

    #[test]
    fn frozen_scale_never_changes() {
        let mut s = RewardScaler::new(true);
        s.scale_reward(0, 4.0);
        s.freeze(0);
        let before = s.scale_of(0);
        for r in [1e6, -3.0, 0.0] {
            s.scale_reward(0, r);
        }
        s.freeze(0);
        assert_eq!(s.scale_of(0), before);
    }

    #[test]
    fn running_median_matches_sort() {
        let mut m = RunningMedian::default();
        let data = [5.0, 1.0, 9.0, 3.0, 3.0, 8.0, 0.5];
        for (i, &x) in data.iter().enumerate() {
            m.push(x);
            assert_eq!(m.median(), crate::stats::median(&data[..=i]));
        }
    }

    proptest! {
        #[test]
        fn calibrating_rewards_have_unit_median(
            base in 1e-2f64..1e4,
            noise in proptest::collection::vec(0.5f64..2.0, 20..200),
        ) {
            let mut s = RewardScaler::new(true);
            let scaled: Vec<f64> = noise.iter().map(|n| s.scale_reward(0, -base * n).abs()).collect();
            let med = crate::stats::median(&scaled).unwrap();
            prop_assert!((0.5..=2.0).contains(&med), "median {}", med);
        }
    }
}
