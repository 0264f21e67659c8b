use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{compute_gae, LinearSchedule};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Net, NetSpec, NetTape, Network};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A2cConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub entropy: LinearSchedule,
    pub adam: AdamConfig,
    /// Critic learning rate; `None` shares the actor's.
    pub critic_lr: Option<f64>,
    /// Standardize advantages within each update batch.
    pub normalize_advantages: bool,
    /// Rollouts gathered per gradient step.
    pub episodes_per_update: usize,
}

impl Default for A2cConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            lambda: 0.95,
            entropy: LinearSchedule { start: 0.1, span: 5000 },
            adam: AdamConfig::default(),
            critic_lr: None,
            normalize_advantages: true,
            episodes_per_update: 8,
        }
    }
}

/// A contiguous stretch of on-policy interaction.
///
/// `bootstrap` is the state after the last reward when the stretch was cut
/// short (episode boundary, loss of control); `None` marks a terminal ending.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rollout {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub bootstrap: Option<Vec<f64>>,
}

impl Rollout {
    pub fn push(&mut self, state: Vec<f64>, action: usize, reward: f64) {
        self.states.push(state);
        self.actions.push(action);
        self.rewards.push(reward);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Rollouts collected by the current policy. Consumed by exactly one update.
#[derive(Debug, Default)]
pub struct OnPolicyBatch {
    rollouts: Vec<Rollout>,
    consumed: bool,
}

impl OnPolicyBatch {
    pub fn new(rollouts: Vec<Rollout>) -> Self {
        Self { rollouts, consumed: false }
    }

    pub fn push(&mut self, rollout: Rollout) {
        if !rollout.is_empty() {
            self.rollouts.push(rollout);
        }
    }

    pub fn samples(&self) -> usize {
        self.rollouts.iter().map(Rollout::len).sum()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct A2cDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_reward: f64,
}

/// Advantage actor-critic with a softmax actor and a scalar critic.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct A2cLearner {
    pub actor: Net,
    pub critic: Net,
    actor_opt: AdamState,
    critic_opt: AdamState,
    pub config: A2cConfig,
    updates: u64,
}

impl A2cLearner {
    pub fn new<R: Rng + ?Sized>(
        actor: &NetSpec,
        critic: &NetSpec,
        config: A2cConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let actor = actor.build(rng)?;
        let critic = critic.build(rng)?;
        Self::from_nets(actor, critic, config)
    }

    pub fn from_nets(actor: Net, critic: Net, config: A2cConfig) -> Result<Self> {
        if critic.output_width() != 1 {
            return Err(Error::config("the critic must have a single output"));
        }
        if actor.input_width() != critic.input_width() {
            return Err(Error::config("actor and critic must read the same observation"));
        }
        let actor_opt = AdamState::new(config.adam, actor.num_params());
        let mut critic_adam = config.adam;
        if let Some(lr) = config.critic_lr {
            critic_adam.lr = lr;
        }
        let critic_opt = AdamState::new(critic_adam, critic.num_params());
        Ok(Self { actor, critic, actor_opt, critic_opt, config, updates: 0 })
    }

    pub fn num_actions(&self) -> usize {
        self.actor.output_width()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn entropy_coef(&self, exploration_epoch: usize) -> f64 {
        self.config.entropy.value(exploration_epoch)
    }

    pub fn policy(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.actor.forward(state)
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(state)?[0])
    }

    /// Samples an action from the current policy.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<usize> {
        let probs = self.policy(state)?;
        Ok(sample_categorical(&probs, rng))
    }

    pub fn greedy(&self, state: &[f64]) -> Result<usize> {
        Ok(crate::nn::argmax(&self.policy(state)?))
    }

    /// Surrogate loss `-(1/N) sum_t [A_t log pi(a_t|s_t) + beta H(pi(.|s_t))]`
    /// and its gradient w.r.t. the actor parameters. Also returns the mean entropy.
    pub fn actor_loss_and_grad(
        &self,
        states: &[Vec<f64>],
        actions: &[usize],
        advantages: &[f64],
        entropy_coef: f64,
    ) -> Result<(f64, Vec<f64>, f64)> {
        let n = states.len();
        if actions.len() != n || advantages.len() != n || n == 0 {
            return Err(Error::config("states, actions and advantages must be equally long and non-empty"));
        }
        let mut grads = vec![0.0; self.actor.num_params()];
        let mut tape = NetTape::default();
        let (mut loss, mut entropy_sum) = (0.0, 0.0);
        let inv_n = 1.0 / n as f64;
        for ((s, &a), &adv) in states.iter().zip(actions).zip(advantages) {
            let p = self.actor.forward_taped(s, &mut tape)?;
            if a >= p.len() {
                return Err(Error::config(format!("action {a} out of range for {} actions", p.len())));
            }
            let log_p: Vec<f64> = p.iter().map(|&x| x.max(f64::MIN_POSITIVE).ln()).collect();
            let h: f64 = -p.iter().zip(&log_p).map(|(pi, lp)| pi * lp).sum::<f64>();
            loss -= (adv * log_p[a] + entropy_coef * h) * inv_n;
            entropy_sum += h;
            // d/dz of -A log p_a is -A (e_a - p); d/dz of -beta H is beta p (log p + H)
            let g: Vec<f64> = (0..p.len())
                .map(|j| {
                    let onehot = if j == a { 1.0 } else { 0.0 };
                    (-adv * (onehot - p[j]) + entropy_coef * p[j] * (log_p[j] + h)) * inv_n
                })
                .collect();
            self.actor.backward_logits(&tape, &g, &mut grads)?;
        }
        Ok((loss, grads, entropy_sum * inv_n))
    }

    /// Mean squared error of the critic against `returns`, with its gradient.
    pub fn critic_loss_and_grad(&self, states: &[Vec<f64>], returns: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = states.len();
        if returns.len() != n || n == 0 {
            return Err(Error::config("states and returns must be equally long and non-empty"));
        }
        let mut grads = vec![0.0; self.critic.num_params()];
        let mut tape = NetTape::default();
        let mut loss = 0.0;
        for (s, &ret) in states.iter().zip(returns) {
            let v = self.critic.forward_taped(s, &mut tape)?[0];
            let err = v - ret;
            loss += err * err / n as f64;
            self.critic.backward(&tape, &[2.0 * err / n as f64], &mut grads)?;
        }
        Ok((loss, grads))
    }

    /// One actor step and one critic step on `batch`, which is then spent.
    pub fn update(&mut self, batch: &mut OnPolicyBatch, entropy_coef: f64) -> Result<A2cDiagnostics> {
        if batch.consumed {
            return Err(Error::usage("on-policy batch was already used for an update"));
        }
        batch.consumed = true;
        let rollouts = std::mem::take(&mut batch.rollouts);
        if rollouts.is_empty() {
            return Err(Error::usage("on-policy batch is empty"));
        }

        let mut states = Vec::new();
        let mut actions = Vec::new();
        let mut advantages = Vec::new();
        let mut returns = Vec::new();
        let mut reward_sum = 0.0;
        for r in rollouts {
            let mut values = Vec::with_capacity(r.len() + 1);
            for s in &r.states {
                values.push(self.value(s)?);
            }
            values.push(match &r.bootstrap {
                Some(s) => self.value(s)?,
                None => 0.0,
            });
            let (adv, ret) = compute_gae(&r.rewards, &values, self.config.gamma, self.config.lambda)?;
            reward_sum += r.rewards.iter().sum::<f64>();
            states.extend(r.states);
            actions.extend(r.actions);
            advantages.extend(adv);
            returns.extend(ret);
        }
        let n = states.len() as f64;

        if self.config.normalize_advantages && advantages.len() > 1 {
            let mean = advantages.iter().sum::<f64>() / n;
            let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if std > 1e-12 {
                for a in &mut advantages {
                    *a = (*a - mean) / (std + 1e-8);
                }
            }
        }

        let (policy_loss, actor_grads, entropy) =
            self.actor_loss_and_grad(&states, &actions, &advantages, entropy_coef)?;
        let (value_loss, critic_grads) = self.critic_loss_and_grad(&states, &returns)?;
        if !policy_loss.is_finite() || !value_loss.is_finite() {
            return Err(Error::divergence(format!(
                "non-finite A2C loss (policy {policy_loss}, value {value_loss})"
            )));
        }
        self.actor_opt.step(self.actor.params_mut(), &actor_grads)?;
        self.critic_opt.step(self.critic.params_mut(), &critic_grads)?;
        self.updates += 1;
        Ok(A2cDiagnostics { policy_loss, value_loss, entropy, mean_reward: reward_sum / n })
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
