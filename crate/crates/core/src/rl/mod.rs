//! Learners and replay machinery.

mod a2c;
mod dqn;
mod gae;
mod replay;
mod scaler;
mod schedule;

pub use a2c::{A2cConfig, A2cDiagnostics, A2cLearner, OnPolicyBatch, Rollout};
pub use dqn::{DqnConfig, DqnDiagnostics, DqnLearner};
pub use gae::compute_gae;
pub use replay::{Ring, ReplayCapacities, ReplayKind, ReplayStrategy};
pub use scaler::RewardScaler;
pub use schedule::{EpsilonSchedule, LinearSchedule};

use serde::{Deserialize, Serialize};

/// One interaction: state, action, reward, next state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: usize,
    /// Environment units (negated milliseconds, QoE points), possibly scaled.
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    /// Environment index reported by the detector when this was collected.
    pub env: usize,
}
