use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EpsilonSchedule, Experience};
use crate::error::{Error, Result};
use crate::nn::{argmax, AdamConfig, AdamState, Net, NetSpec, NetTape, Network};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub gamma: f64,
    /// Soft target update rate.
    pub polyak: f64,
    pub batch_size: usize,
    pub epsilon: EpsilonSchedule,
    pub adam: AdamConfig,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            polyak: 0.01,
            batch_size: 64,
            epsilon: EpsilonSchedule { random_epochs: 1000, decay_epochs: 5000 },
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnDiagnostics {
    pub loss: f64,
    pub mean_q: f64,
}

/// Double DQN: the online network picks the next action, the target network
/// values it; the target only ever moves by Polyak averaging.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DqnLearner {
    pub online: Net,
    pub target: Net,
    opt: AdamState,
    pub config: DqnConfig,
    updates: u64,
}

impl DqnLearner {
    pub fn new<R: Rng + ?Sized>(spec: &NetSpec, config: DqnConfig, rng: &mut R) -> Result<Self> {
        let online = spec.build(rng)?;
        Ok(Self::from_net(online, config))
    }

    pub fn from_net(online: Net, config: DqnConfig) -> Self {
        let target = online.clone();
        let opt = AdamState::new(config.adam, online.num_params());
        Self { online, target, opt, config, updates: 0 }
    }

    pub fn num_actions(&self) -> usize {
        self.online.output_width()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.online.forward(state)
    }

    pub fn greedy(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_values(state)?))
    }

    /// Epsilon-greedy action; greedy ties go to the lowest index.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            Ok(rng.random_range(0..self.num_actions()))
        } else {
            self.greedy(state)
        }
    }

    /// `y = r + gamma (1 - done) Q_target(s', argmax_a Q_online(s', a))`.
    pub fn target_value(&self, exp: &Experience) -> Result<f64> {
        if exp.done {
            return Ok(exp.reward);
        }
        let a_star = argmax(&self.online.forward(&exp.next_state)?);
        let q_next = self.target.forward(&exp.next_state)?[a_star];
        Ok(exp.reward + self.config.gamma * q_next)
    }

    /// One L2 regression step on the online network followed by a soft
    /// target update. An empty minibatch is skipped and yields `None`.
    pub fn update(&mut self, batch: &[&Experience]) -> Result<Option<DqnDiagnostics>> {
        if batch.is_empty() {
            log::warn!("DQN update skipped: empty minibatch");
            return Ok(None);
        }
        let targets = batch.iter().map(|e| self.target_value(e)).collect::<Result<Vec<_>>>()?;
        let n = batch.len() as f64;
        let mut grads = vec![0.0; self.online.num_params()];
        let mut tape = NetTape::default();
        let (mut loss, mut q_sum) = (0.0, 0.0);
        for (exp, y) in batch.iter().zip(&targets) {
            let q = self.online.forward_taped(&exp.state, &mut tape)?;
            if exp.action >= q.len() {
                return Err(Error::config(format!("action {} out of range", exp.action)));
            }
            let err = q[exp.action] - y;
            loss += err * err / n;
            q_sum += q[exp.action];
            let mut g = vec![0.0; q.len()];
            g[exp.action] = 2.0 * err / n;
            self.online.backward(&tape, &g, &mut grads)?;
        }
        if !loss.is_finite() {
            return Err(Error::divergence(format!("non-finite DQN loss {loss}")));
        }
        self.opt.step(self.online.params_mut(), &grads)?;
        self.soft_update();
        self.updates += 1;
        Ok(Some(DqnDiagnostics { loss, mean_q: q_sum / n }))
    }

    /// `theta_target <- alpha theta_online + (1 - alpha) theta_target`.
    pub fn soft_update(&mut self) {
        let alpha = self.config.polyak;
        let online = self.online.params();
        for (t, &o) in self.target.params_mut().iter_mut().zip(online) {
            *t = alpha * o + (1.0 - alpha) * *t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Mlp};

    /// 1-input linear nets whose outputs are exactly their biases for input 0.
    fn table(q: &[f64]) -> Net {
        let mut params = vec![0.0; q.len()];
        params.extend_from_slice(q);
        Net::Mlp(Mlp::from_params(&[1, q.len()], Activation::Identity, params).unwrap())
    }

    fn exp(reward: f64, done: bool) -> Experience {
        Experience { state: vec![0.0], action: 0, reward, next_state: vec![0.0], done, env: 0 }
    }

    #[test]
    fn bellman_target_uses_online_argmax_and_target_value() {
        let mut learner = DqnLearner::from_net(table(&[1.0, 3.0]), DqnConfig::default());
        learner.target = table(&[9.0, 5.0]);
        // online argmax is action 1; target values it at 5
        assert!((learner.target_value(&exp(2.0, false)).unwrap() - 6.5).abs() < 1e-12);
    }

    #[test]
    fn terminal_target_is_reward() {
        let learner = DqnLearner::from_net(table(&[1.0, 3.0]), DqnConfig::default());
        assert_eq!(learner.target_value(&exp(2.0, true)).unwrap(), 2.0);
    }

    #[test]
    fn empty_batch_is_skipped() {
        let mut learner = DqnLearner::from_net(table(&[0.0, 0.0]), DqnConfig::default());
        assert!(learner.update(&[]).unwrap().is_none());
        assert_eq!(learner.updates(), 0);
    }

    #[test]
    fn polyak_contracts_by_one_minus_alpha() {
        let mut learner = DqnLearner::from_net(table(&[1.0, -1.0]), DqnConfig::default());
        learner.target = table(&[0.0, 0.0]);
        let gap0: f64 = distance(&learner);
        for _ in 0..10 {
            learner.soft_update();
        }
        let expected = gap0 * 0.99f64.powi(10);
        assert!((distance(&learner) - expected).abs() < 1e-12);
    }

    fn distance(l: &DqnLearner) -> f64 {
        l.online.params().iter().zip(l.target.params()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }
}
