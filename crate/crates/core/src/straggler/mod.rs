//! Request-hedging proxy in front of a pool of FIFO servers.

mod sim;
mod workload;

pub use sim::{
    draw_service_time, shortest_queue, EventRecord, SimConfig, StragglerSim, WindowOutcome, WindowSummary,
};
pub use workload::{read_trace, write_trace, StragglerWorkload, TraceRow, WorkloadPreset};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::BoxStats;

/// Hedging timeouts in milliseconds, indexed by action.
pub const TIMEOUTS_MS: [f64; 7] = [3.0, 10.0, 30.0, 60.0, 100.0, 300.0, f64::INFINITY];

/// Index into [`TIMEOUTS_MS`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HedgeAction(usize);

impl HedgeAction {
    pub const COUNT: usize = TIMEOUTS_MS.len();
    pub const NO_HEDGE: HedgeAction = HedgeAction(TIMEOUTS_MS.len() - 1);

    pub fn new(index: usize) -> Result<Self> {
        if index < Self::COUNT {
            Ok(Self(index))
        } else {
            Err(Error::config(format!("hedge action {index} out of range 0..{}", Self::COUNT)))
        }
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn timeout_ms(self) -> f64 {
        TIMEOUTS_MS[self.0]
    }

    pub fn all() -> impl Iterator<Item = HedgeAction> {
        (0..Self::COUNT).map(HedgeAction)
    }
}

/// The default policy used while the safeguard holds control: never hedge.
pub fn default_policy_action(_observation: &[f64]) -> HedgeAction {
    HedgeAction::NO_HEDGE
}

/// Poisson arrivals with lognormal job sizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadParams {
    pub rate_per_s: f64,
    pub mean_size_ms: f64,
    /// Standard deviation of the underlying normal.
    pub size_sigma: f64,
}

impl WorkloadParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rate_per_s > 0.0
            && self.rate_per_s.is_finite()
            && self.mean_size_ms > 0.0
            && self.mean_size_ms.is_finite()
            && self.size_sigma >= 0.0
            && self.size_sigma.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid workload parameters {self:?}")))
        }
    }

    /// Offered utilization of `servers` servers before hedging and slowdowns.
    pub fn nominal_load(&self, servers: usize) -> f64 {
        self.rate_per_s * self.mean_size_ms / 1000.0 / servers as f64
    }
}

/// Number of 500 ms windows in a 5 minute metric window.
pub const METRIC_WINDOW_ACTIONS: usize = 600;

/// Percentile summary of one metric window; `None` when it saw no samples.
pub fn metric_window(latencies: &[f64]) -> Option<BoxStats> {
    BoxStats::from_values(latencies)
}

/// Groups consecutive action windows into metric windows of `actions_per_window`
/// and returns the p95 of each group (nearest rank). Empty groups are dropped.
pub fn windowed_p95<'a, I>(windows: I, actions_per_window: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut out = Vec::new();
    let mut pooled = Vec::new();
    let mut count = 0;
    for lat in windows {
        pooled.extend_from_slice(lat);
        count += 1;
        if count == actions_per_window {
            out.extend(crate::stats::percentile(&pooled, 95.0));
            pooled.clear();
            count = 0;
        }
    }
    if count > 0 {
        out.extend(crate::stats::percentile(&pooled, 95.0));
    }
    out
}
