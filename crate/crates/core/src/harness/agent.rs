use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, LearnerKind};
use crate::error::Result;
use crate::nn::{Activation, AdamConfig, NetSpec};
use crate::rl::{
    A2cConfig, A2cLearner, DqnConfig, DqnLearner, EpsilonSchedule, Experience, LinearSchedule, ReplayStrategy,
};

/// Layout of an observation for building networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObsLayout {
    /// `set_size` elements of `element_width` features (feature-major),
    /// followed by `tail` scalars.
    Set { set_size: usize, element_width: usize, tail: usize },
    Flat { width: usize },
}

impl ObsLayout {
    pub fn with_extra(self, extra: usize) -> Self {
        match self {
            ObsLayout::Set { set_size, element_width, tail } => ObsLayout::Set { set_size, element_width, tail: tail + extra },
            ObsLayout::Flat { width } => ObsLayout::Flat { width: width + extra },
        }
    }

    pub fn width(self) -> usize {
        match self {
            ObsLayout::Set { set_size, element_width, tail } => set_size * element_width + tail,
            ObsLayout::Flat { width } => width,
        }
    }

    pub fn spec(self, output: usize, head: Activation) -> NetSpec {
        match self {
            ObsLayout::Set { set_size, element_width, tail } => NetSpec::DeepSets {
                set_size,
                element_width,
                tail_width: tail,
                phi_hidden: vec![16, 8],
                rho_hidden: vec![16, 8],
                output,
                head,
            },
            ObsLayout::Flat { width } => NetSpec::Mlp { input: width, hidden: vec![64, 32], output, head },
        }
    }
}

/// A learner as driven by the harness.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Agent {
    A2c(A2cLearner),
    Dqn { learner: DqnLearner, #[serde(skip, default = "empty_replay")] replay: ReplayStrategy },
}

fn empty_replay() -> ReplayStrategy {
    ReplayStrategy::new(crate::rl::ReplayKind::Large, Default::default())
}

impl Agent {
    pub fn build<R: Rng + ?Sized>(cfg: &ExperimentConfig, layout: ObsLayout, actions: usize, rng: &mut R) -> Result<Self> {
        match cfg.learner {
            LearnerKind::A2c => {
                let config = A2cConfig {
                    gamma: cfg.a2c.gamma,
                    lambda: cfg.a2c.lambda,
                    entropy: LinearSchedule {
                        start: cfg.a2c.entropy_start,
                        span: ((cfg.t_c as f64) * cfg.a2c.entropy_fraction).round() as usize,
                    },
                    adam: AdamConfig { lr: cfg.a2c.lr, ..AdamConfig::default() },
                    critic_lr: None,
                    normalize_advantages: true,
                    episodes_per_update: 1,
                };
                let actor = layout.spec(actions, Activation::Softmax);
                let critic = layout.spec(1, Activation::Identity);
                Ok(Agent::A2c(A2cLearner::new(&actor, &critic, config, rng)?))
            }
            LearnerKind::Dqn => {
                let random = ((cfg.t_c as f64) * cfg.dqn.random_fraction).round() as usize;
                let config = DqnConfig {
                    gamma: cfg.dqn.gamma,
                    polyak: 0.01,
                    batch_size: cfg.dqn.batch_size,
                    epsilon: EpsilonSchedule { random_epochs: random, decay_epochs: (cfg.t_c as usize).saturating_sub(random) },
                    adam: AdamConfig { lr: cfg.dqn.lr, ..AdamConfig::default() },
                };
                let spec = layout.spec(actions, Activation::Identity);
                Ok(Agent::Dqn {
                    learner: DqnLearner::new(&spec, config, rng)?,
                    replay: ReplayStrategy::new(cfg.buffer, cfg.dqn.replay),
                })
            }
        }
    }

    /// Chooses an action. `exploration_epoch` is `None` once the environment's
    /// exploration is over.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], exploration_epoch: Option<u64>, rng: &mut R) -> Result<usize> {
        match self {
            Agent::A2c(l) => l.act(obs, rng),
            Agent::Dqn { learner, .. } => {
                let eps = exploration_epoch.map_or(0.0, |e| learner.config.epsilon.value(e as usize));
                learner.act(obs, eps, rng)
            }
        }
    }

    pub fn greedy(&self, obs: &[f64]) -> Result<usize> {
        match self {
            Agent::A2c(l) => l.greedy(obs),
            Agent::Dqn { learner, .. } => learner.greedy(obs),
        }
    }

    pub fn insert(&mut self, exp: Experience) {
        if let Agent::Dqn { replay, .. } = self {
            replay.insert(exp);
        }
    }

    /// One DQN minibatch step when the buffer has data.
    pub fn train_off_policy<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<bool> {
        let Agent::Dqn { learner, replay } = self else { return Ok(false) };
        if replay.is_empty() {
            return Ok(false);
        }
        let batch = replay.sample(learner.config.batch_size, rng)?;
        Ok(learner.update(&batch)?.is_some())
    }
}
