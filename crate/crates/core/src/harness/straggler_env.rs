use std::collections::BTreeMap;

use super::agent::ObsLayout;
use super::runner::{sub_seed, ControlEnv, MetricSample, StepReport};
use crate::error::Result;
use crate::framework::{
    Controller, FeatureScales, SafetyConfig, SafetyMonitor, StragglerFeatureTracker, WorkloadFeatures,
};
use crate::straggler::{
    default_policy_action, HedgeAction, SimConfig, StragglerSim, StragglerWorkload, WorkloadParams, WorkloadPreset,
    METRIC_WINDOW_ACTIONS,
};

/// Action windows the workload-feature tracker averages over.
pub const FEATURE_WINDOWS: usize = 4;

/// Where the straggler workload comes from.
#[derive(Clone, Debug)]
pub enum StragglerSource {
    /// Scripted phases; the loop names the preset index each epoch.
    Presets(Vec<WorkloadParams>),
    /// A generator indexed by action window, with its number of regimes and
    /// a horizon (in windows) over which every regime shows up.
    Generator { workload: StragglerWorkload, regimes: usize, horizon: u64 },
}

#[derive(Default)]
struct OpenWindow {
    workload: usize,
    converged: bool,
    actions: usize,
    latencies: Vec<f64>,
}

/// The request-hedging proxy as a control environment.
pub struct StragglerEnv {
    sim: StragglerSim,
    source: StragglerSource,
    names: Vec<String>,
    monitor: SafetyMonitor,
    tracker: StragglerFeatureTracker,
    window: u64,
    label: usize,
    converged: bool,
    open: Option<OpenWindow>,
    samples: Vec<MetricSample>,
    // totals reported as extras
    max_peak_queue: usize,
    max_arrivals: usize,
    hedges: u64,
    default_windows: u64,
    windows: u64,
    last_latencies: Vec<f64>,
}

impl StragglerEnv {
    pub fn new(config: SimConfig, source: StragglerSource, safeguard: SafetyConfig, seed: u64) -> Result<Self> {
        let (first, names) = match &source {
            StragglerSource::Presets(presets) => {
                let first = *presets.first().ok_or_else(|| crate::Error::config("no workload presets"))?;
                let names = if presets.len() == 3 {
                    WorkloadPreset::SCENARIO.iter().map(|p| p.name().to_string()).collect()
                } else {
                    (0..presets.len()).map(|i| format!("w{i}")).collect()
                };
                (first, names)
            }
            StragglerSource::Generator { workload, regimes, .. } => {
                (workload.at(0)?.0, (0..*regimes).map(|i| format!("regime{i}")).collect())
            }
        };
        Ok(Self {
            sim: StragglerSim::new(config, first, seed)?,
            source,
            names,
            monitor: SafetyMonitor::new(safeguard),
            tracker: StragglerFeatureTracker::new(FEATURE_WINDOWS),
            window: 0,
            label: 0,
            converged: false,
            open: None,
            samples: Vec::new(),
            max_peak_queue: 0,
            max_arrivals: 0,
            hedges: 0,
            default_windows: 0,
            windows: 0,
            last_latencies: Vec::new(),
        })
    }

    /// The three scenario presets.
    pub fn presets(safeguard: SafetyConfig, seed: u64) -> Result<Self> {
        let presets = WorkloadPreset::SCENARIO.iter().map(|p| p.params()).collect();
        Self::new(SimConfig::default(), StragglerSource::Presets(presets), safeguard, seed)
    }

    pub fn sim(&self) -> &StragglerSim {
        &self.sim
    }

    pub fn monitor(&self) -> &SafetyMonitor {
        &self.monitor
    }

    /// Latencies of jobs completed in the latest window.
    pub fn take_window_latencies(&mut self) -> Vec<f64> {
        std::mem::take(&mut self.last_latencies)
    }

    fn close_window(&mut self) {
        if let Some(open) = self.open.take() {
            if let Some(p95) = crate::stats::percentile(&open.latencies, 95.0) {
                self.samples.push(MetricSample { workload: open.workload, value: p95, converged: open.converged });
            }
        }
    }

    fn apply_workload(&mut self, params: WorkloadParams, label: usize) -> Result<()> {
        if label != self.label {
            self.close_window();
        }
        self.label = label;
        self.sim.set_workload(params)
    }
}

impl ControlEnv for StragglerEnv {
    fn layout(&self) -> ObsLayout {
        let cfg = self.sim.config();
        ObsLayout::Set { set_size: cfg.servers, element_width: 2, tail: 3 * cfg.history_windows + 2 }
    }

    fn num_actions(&self) -> usize {
        HedgeAction::COUNT
    }

    fn feature_scales(&self) -> FeatureScales {
        FeatureScales::straggler()
    }

    fn begin_epoch(&mut self, _epoch: u64, workload: Option<usize>, converged: bool) -> Result<()> {
        self.converged = converged;
        if let (Some(w), StragglerSource::Presets(presets)) = (workload, &self.source) {
            let params = *presets.get(w).ok_or_else(|| crate::Error::config(format!("no preset {w}")))?;
            self.apply_workload(params, w)?;
        }
        Ok(())
    }

    fn observe(&mut self) -> Vec<f64> {
        self.sim.observe(self.monitor.controller() == Controller::Default)
    }

    fn features(&self) -> WorkloadFeatures {
        self.tracker.features()
    }

    fn current_label(&self) -> usize {
        self.label
    }

    fn controller(&self) -> Controller {
        self.monitor.controller()
    }

    fn default_action(&self, obs: &[f64]) -> usize {
        default_policy_action(obs).index()
    }

    fn step(&mut self, action: usize, acted: Controller) -> Result<StepReport> {
        if let StragglerSource::Generator { workload, .. } = &self.source {
            let (params, label) = workload.at(self.window)?;
            self.apply_workload(params, label)?;
        }
        let outcome = self.sim.step(HedgeAction::new(action)?)?;
        self.window += 1;
        self.windows += 1;
        self.tracker.push(self.sim.config().window_ms, outcome.arrivals, outcome.arrival_mean_size_ms);
        self.max_peak_queue = self.max_peak_queue.max(outcome.peak_queue);
        self.max_arrivals = self.max_arrivals.max(outcome.arrivals);
        self.hedges += outcome.hedges as u64;
        if acted == Controller::Default {
            self.default_windows += 1;
        }
        let t_ms = self.sim.now_ms();
        self.monitor.step(t_ms, outcome.max_queue() as f64);

        let open = self.open.get_or_insert_with(|| OpenWindow {
            workload: self.label,
            converged: self.converged,
            ..OpenWindow::default()
        });
        open.latencies.extend_from_slice(&outcome.latencies);
        open.actions += 1;
        if open.actions >= METRIC_WINDOW_ACTIONS {
            self.close_window();
        }
        let metric = (!outcome.latencies.is_empty()).then_some(-outcome.reward);
        self.last_latencies = outcome.latencies;
        Ok(StepReport { reward: outcome.reward, t_ms, metric })
    }

    fn end_epoch(&mut self) -> Result<()> {
        Ok(())
    }

    fn take_metrics(&mut self, flush: bool) -> Vec<MetricSample> {
        if flush {
            self.close_window();
        }
        std::mem::take(&mut self.samples)
    }

    fn workload_name(&self, workload: usize) -> String {
        self.names.get(workload).cloned().unwrap_or_else(|| format!("w{workload}"))
    }

    fn detector_components(&self) -> usize {
        match &self.source {
            StragglerSource::Presets(p) => p.len(),
            StragglerSource::Generator { regimes, .. } => *regimes,
        }
    }

    fn calibration_features(&mut self, seed: u64) -> Result<Vec<WorkloadFeatures>> {
        let config = SimConfig { record_events: false, ..self.sim.config().clone() };
        let params: Vec<WorkloadParams> = match &self.source {
            StragglerSource::Presets(p) => p.clone(),
            StragglerSource::Generator { workload, regimes, horizon } => {
                // sample the generator evenly over its horizon
                let points = 12 * *regimes as u64;
                (0..points).map(|i| Ok(workload.at(i * horizon / points)?.0)).collect::<Result<_>>()?
            }
        };
        let per_workload = if params.len() > 3 { 4 } else { 40 };
        let mut history = Vec::new();
        for (i, p) in params.iter().enumerate() {
            let mut sim = StragglerSim::new(config.clone(), *p, sub_seed(seed, i as u64))?;
            let mut tracker = StragglerFeatureTracker::new(FEATURE_WINDOWS);
            for w in 0..(FEATURE_WINDOWS + per_workload) {
                let o = sim.step(HedgeAction::NO_HEDGE)?;
                tracker.push(config.window_ms, o.arrivals, o.arrival_mean_size_ms);
                if w >= FEATURE_WINDOWS {
                    history.push(tracker.features());
                }
            }
        }
        Ok(history)
    }

    fn extras(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("max_peak_queue".to_string(), self.max_peak_queue as f64),
            ("max_window_arrivals".to_string(), self.max_arrivals as f64),
            ("hedges".to_string(), self.hedges as f64),
            ("default_windows".to_string(), self.default_windows as f64),
            ("windows".to_string(), self.windows as f64),
            ("safeguard_transitions".to_string(), self.monitor.transitions().len() as f64),
        ])
    }
}
