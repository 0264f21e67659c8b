use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scenario::{Scenario, ScenarioKind};
use crate::error::{Error, Result};
use crate::framework::{ExpertMode, SafetyConfig};
use crate::rl::{ReplayCapacities, ReplayKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Straggler,
    Abr,
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straggler" => Ok(EnvKind::Straggler),
            "abr" => Ok(EnvKind::Abr),
            other => Err(Error::config(format!("unknown environment '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    A2c,
    Dqn,
}

impl std::str::FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a2c" => Ok(LearnerKind::A2c),
            "dqn" => Ok(LearnerKind::Dqn),
            other => Err(Error::config(format!("unknown learner '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    /// True workload labels, optionally corrupted by `label_noise`.
    GroundTruth,
    /// A Gaussian mixture fitted to calibration features.
    Gmm,
}

impl std::str::FromStr for DetectorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ground_truth" | "labels" => Ok(DetectorMode::GroundTruth),
            "gmm" => Ok(DetectorMode::Gmm),
            other => Err(Error::config(format!("unknown detector mode '{other}'"))),
        }
    }
}

/// A2C settings used by the harness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A2cSettings {
    pub lr: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub entropy_start: f64,
    /// Share of the exploration span over which the entropy bonus decays.
    pub entropy_fraction: f64,
    /// Environment steps between gradient updates (cut points bootstrap).
    pub steps_per_update: usize,
    /// Scaled rewards are clipped to `[-reward_clip, reward_clip]`.
    pub reward_clip: f64,
}

/// DQN settings used by the harness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnSettings {
    pub lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    /// Environment steps between gradient updates.
    pub train_every: usize,
    /// Share of the exploration span spent fully random.
    pub random_fraction: f64,
    pub replay: ReplayCapacities,
    pub reward_clip: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub scenario: Scenario,
    pub learner: LearnerKind,
    pub expert_mode: ExpertMode,
    pub buffer: ReplayKind,
    /// Append workload features to observations.
    pub workload_info: bool,
    pub safeguard: SafetyConfig,
    pub detector: DetectorMode,
    /// Probability that a ground-truth label is replaced by a wrong one.
    pub label_noise: f64,
    pub gmm_dwell: usize,
    pub seed: u64,
    /// Convergence time in epochs; also each environment's exploration span.
    pub t_c: u64,
    /// Actions per epoch.
    pub episode_len: usize,
    /// ABR only: guard training with the fake-replay mechanism.
    pub fake_replay: bool,
    /// ABR only: user groups playing the roles of the three workloads.
    pub user_groups: [usize; 3],
    pub a2c: A2cSettings,
    pub dqn: DqnSettings,
    pub write_checkpoints: bool,
}

/// Keeps the full-scale ratio of a million-entry ring to the 728k samples
/// of one convergence span.
fn desk_replay(t_c: u64, episode_len: usize) -> ReplayCapacities {
    let ring = (t_c as f64 * episode_len as f64 * 1e6 / 728_000.0).round() as usize;
    ReplayCapacities { large: usize::MAX, small: ring, per_env: ring }
}

impl ExperimentConfig {
    /// Desk-scale defaults for the given environment and scenario.
    pub fn desk(env: EnvKind, scenario: ScenarioKind) -> Self {
        // entropy: 0.1 over five sixths of the span (straggler), 0.25 over two thirds (ABR)
        let (t_c, episode_len, gamma, entropy_start, entropy_fraction) = match env {
            EnvKind::Straggler => (300, 64, 0.9, 0.1, 5.0 / 6.0),
            EnvKind::Abr => (200, 98, 0.96, 0.25, 2.0 / 3.0),
        };
        Self {
            env,
            scenario: Scenario::new(scenario),
            learner: LearnerKind::A2c,
            expert_mode: ExpertMode::Multi,
            buffer: ReplayKind::LongTermShortTerm,
            workload_info: false,
            safeguard: SafetyConfig { enabled: env == EnvKind::Straggler, ..SafetyConfig::default() },
            detector: DetectorMode::GroundTruth,
            label_noise: 0.0,
            gmm_dwell: 4,
            seed: 0,
            t_c,
            episode_len,
            fake_replay: false,
            user_groups: [0, 1, 2],
            a2c: A2cSettings {
                lr: 1e-3,
                gamma,
                lambda: 0.95,
                entropy_start,
                entropy_fraction,
                steps_per_update: 16,
                reward_clip: 10.0,
            },
            dqn: DqnSettings {
                lr: 1e-3,
                gamma,
                batch_size: 32,
                train_every: 4,
                random_fraction: 1.0 / 6.0,
                replay: desk_replay(t_c, episode_len),
                reward_clip: 10.0,
            },
            write_checkpoints: true,
        }
    }

    /// The full-scale convergence times (6000 straggler / 3000 ABR epochs).
    pub fn full_scale(mut self) -> Self {
        self.t_c = match self.env {
            EnvKind::Straggler => 6000,
            EnvKind::Abr => 3000,
        };
        self.dqn.replay = ReplayCapacities::default();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_c == 0 || self.episode_len == 0 {
            return Err(Error::config("t_c and episode_len must be positive"));
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return Err(Error::config(format!("label noise {} outside [0, 1]", self.label_noise)));
        }
        if self.a2c.steps_per_update == 0 || self.dqn.train_every == 0 || self.dqn.batch_size == 0 {
            return Err(Error::config("update cadences and batch size must be positive"));
        }
        if self.expert_mode == ExpertMode::Oracle && self.detector != DetectorMode::GroundTruth {
            return Err(Error::config("oracle mode requires ground-truth labels"));
        }
        if self.expert_mode == ExpertMode::Oracle && !self.scenario.is_phased() {
            return Err(Error::config("oracle mode needs a phased scenario with known workloads"));
        }
        if self.env == EnvKind::Abr && !self.scenario.is_phased() {
            return Err(Error::config("continuous scenarios are only defined for the straggler environment"));
        }
        if self.env == EnvKind::Abr && self.user_groups.iter().any(|g| *g >= 5) {
            return Err(Error::config("user groups are numbered 0..5"));
        }
        if self.dqn.replay.small == 0 || self.dqn.replay.large == 0 || self.dqn.replay.per_env == 0 {
            return Err(Error::config("replay capacities must be positive"));
        }
        if self.scenario.is_phased() {
            self.scenario.phases(self.t_c)?;
        }
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
