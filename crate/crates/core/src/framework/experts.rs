use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertMode {
    /// One shared learner for every environment.
    Single,
    /// One learner per detected environment.
    Multi,
    /// One learner per true workload, each pretrained on its workload alone.
    Oracle,
}

impl ExpertMode {
    pub fn name(self) -> &'static str {
        match self {
            ExpertMode::Single => "single",
            ExpertMode::Multi => "multi",
            ExpertMode::Oracle => "oracle",
        }
    }

    pub fn is_per_environment(self) -> bool {
        !matches!(self, ExpertMode::Single)
    }
}

impl std::str::FromStr for ExpertMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(ExpertMode::Single),
            "multi" => Ok(ExpertMode::Multi),
            "oracle" => Ok(ExpertMode::Oracle),
            other => Err(Error::config(format!("unknown expert mode '{other}'"))),
        }
    }
}

/// Exploration state of one environment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationStatus {
    /// Exploration epochs spent so far (never more than the span).
    pub epochs: u64,
    /// Epochs in which this environment was active, exploring or not.
    pub epochs_active: u64,
    /// Training batches delivered to this environment's learner.
    pub batches: u64,
}

/// What the agent should do after an environment signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Directive {
    pub env: usize,
    /// The learner that acts and trains (always 0 in single mode).
    pub expert: usize,
    pub newly_created: bool,
    /// `Some(epoch)` while exploring, counting from the environment's first
    /// exploration epoch; `None` once its one-time exploration is complete.
    pub exploration_epoch: Option<u64>,
}

/// Keeps one learner per environment (or a shared one) and gives every
/// environment exactly one exploration span of `exploration_epochs`, which
/// resumes where it left off if the environment comes back mid-way.
#[derive(Clone, Debug)]
pub struct ExpertManager<L> {
    mode: ExpertMode,
    exploration_epochs: u64,
    learners: BTreeMap<usize, L>,
    status: BTreeMap<usize, ExplorationStatus>,
    active: Option<usize>,
}

impl<L> ExpertManager<L> {
    pub fn new(mode: ExpertMode, exploration_epochs: u64) -> Self {
        Self { mode, exploration_epochs, learners: BTreeMap::new(), status: BTreeMap::new(), active: None }
    }

    pub fn mode(&self) -> ExpertMode {
        self.mode
    }

    pub fn exploration_epochs(&self) -> u64 {
        self.exploration_epochs
    }

    fn expert_key(&self, env: usize) -> usize {
        if self.mode.is_per_environment() {
            env
        } else {
            0
        }
    }

    /// Installs a learner for `env` (e.g. a pretrained oracle expert), marking
    /// its exploration as already complete when `explored` is set.
    pub fn insert_expert(&mut self, env: usize, learner: L, explored: bool) {
        let key = self.expert_key(env);
        self.learners.insert(key, learner);
        let status = self.status.entry(env).or_default();
        if explored {
            status.epochs = self.exploration_epochs;
        }
    }

    /// Activates the expert for `env`, creating it with `make` if the
    /// environment (or, in single mode, any environment) was never seen.
    pub fn on_environment_signal(&mut self, env: usize, make: impl FnOnce() -> Result<L>) -> Result<Directive> {
        let key = self.expert_key(env);
        let mut newly_created = false;
        if !self.learners.contains_key(&key) {
            self.learners.insert(key, make()?);
            newly_created = true;
        }
        let status = self.status.entry(env).or_default();
        self.active = Some(env);
        let exploration_epoch = (status.epochs < self.exploration_epochs).then_some(status.epochs);
        Ok(Directive { env, expert: key, newly_created, exploration_epoch })
    }

    pub fn active_env(&self) -> Option<usize> {
        self.active
    }

    pub fn is_exploring(&self, env: usize) -> bool {
        self.status.get(&env).is_none_or(|s| s.epochs < self.exploration_epochs)
    }

    /// Current exploration epoch of the active environment, if still exploring.
    pub fn exploration_epoch(&self) -> Option<u64> {
        let env = self.active?;
        let epochs = self.status.get(&env).map_or(0, |s| s.epochs);
        (epochs < self.exploration_epochs).then_some(epochs)
    }

    /// Marks one epoch as spent in the active environment.
    pub fn finish_epoch(&mut self) -> Result<()> {
        let env = self.active.ok_or_else(|| Error::usage("no active environment"))?;
        let span = self.exploration_epochs;
        let status = self.status.get_mut(&env).expect("active environment has status");
        status.epochs_active += 1;
        if status.epochs < span {
            status.epochs += 1;
        }
        Ok(())
    }

    pub fn status(&self, env: usize) -> Option<ExplorationStatus> {
        self.status.get(&env).copied()
    }

    pub fn environments(&self) -> impl Iterator<Item = usize> + '_ {
        self.status.keys().copied()
    }

    pub fn num_experts(&self) -> usize {
        self.learners.len()
    }

    pub fn active_learner(&self) -> Result<&L> {
        let env = self.active.ok_or_else(|| Error::usage("no active environment"))?;
        Ok(&self.learners[&self.expert_key(env)])
    }

    pub fn learner(&self, env: usize) -> Option<&L> {
        self.learners.get(&self.expert_key(env))
    }

    pub fn learner_mut(&mut self, env: usize) -> Option<&mut L> {
        let key = self.expert_key(env);
        self.learners.get_mut(&key)
    }

    /// The learner that may train on a batch collected while `collected_in`
    /// was active. Per-environment modes refuse batches from any other
    /// environment than the active one.
    pub fn route_batch(&mut self, collected_in: usize) -> Result<&mut L> {
        let env = self.active.ok_or_else(|| Error::usage("no active environment"))?;
        if self.mode.is_per_environment() && collected_in != env {
            return Err(Error::usage(format!(
                "batch collected in environment {collected_in} routed while {env} is active"
            )));
        }
        self.status.get_mut(&env).expect("active environment has status").batches += 1;
        let key = self.expert_key(env);
        Ok(self.learners.get_mut(&key).expect("active expert exists"))
    }

    pub fn into_learners(self) -> BTreeMap<usize, L> {
        self.learners
    }
}
