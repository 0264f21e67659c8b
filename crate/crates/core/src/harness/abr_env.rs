use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::agent::ObsLayout;
use super::runner::{sub_seed, ControlEnv, MetricSample, StepReport};
use crate::abr::{
    bba_action, AbrSession, FakeReplayGuard, GuardDecision, UserGroup, VideoSpec, BBA_CUSHION_SECS,
    BBA_RESERVOIR_SECS, REBUFFER_PENALTY,
};
use crate::error::Result;
use crate::framework::{AbrFeatureTracker, Controller, FeatureScales, WorkloadFeatures};

/// Seconds of bandwidth drawn per session (downloads wrap around).
const SESSION_TRACE_SECS: usize = 600;
/// Chunks in the short and long feature horizons.
const FEATURE_SHORT: usize = 5;
const FEATURE_LONG: usize = 25;

/// Streaming sessions played back to back, with user groups as workloads.
pub struct AbrEnv {
    video: VideoSpec,
    groups: Vec<UserGroup>,
    penalty: f64,
    session: AbrSession,
    trace_rng: ChaCha8Rng,
    guard: Option<FakeReplayGuard>,
    guard_rng: ChaCha8Rng,
    decision: GuardDecision,
    tracker: AbrFeatureTracker,
    label: usize,
    epoch: u64,
    converged: bool,
    session_converged: bool,
    session_label: usize,
    session_closed: bool,
    samples: Vec<MetricSample>,
    quarter_epochs: u64,
    rebuffer_s: f64,
    rebuffer_quarter_s: f64,
    rebuffer_quarter_default_s: f64,
    agent_chunks: u64,
    default_chunks: u64,
    sessions: u64,
    clock_ms: f64,
}

impl AbrEnv {
    /// `guard_anneal_epochs` enables the fake-replay guard; `quarter_epochs`
    /// marks the early-training span whose rebuffering is reported separately.
    pub fn new(
        groups: Vec<UserGroup>,
        guard_anneal_epochs: Option<u64>,
        quarter_epochs: u64,
        seed: u64,
    ) -> Result<Self> {
        let first = *groups.first().ok_or_else(|| crate::Error::config("no user groups"))?;
        let video = VideoSpec::default_video();
        let mut trace_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 10));
        let trace = first.generator().generate(SESSION_TRACE_SECS, &mut trace_rng)?;
        let session = AbrSession::new(video.clone(), trace, REBUFFER_PENALTY)?;
        let mut env = Self {
            video,
            groups,
            penalty: REBUFFER_PENALTY,
            session,
            trace_rng,
            guard: guard_anneal_epochs.map(FakeReplayGuard::standard),
            guard_rng: ChaCha8Rng::seed_from_u64(sub_seed(seed, 11)),
            decision: GuardDecision { controller: Controller::Agent, observed_buffer_s: 0.0 },
            tracker: AbrFeatureTracker::new(FEATURE_SHORT, FEATURE_LONG),
            label: 0,
            epoch: 0,
            converged: false,
            session_converged: false,
            session_label: 0,
            session_closed: false,
            samples: Vec::new(),
            quarter_epochs,
            rebuffer_s: 0.0,
            rebuffer_quarter_s: 0.0,
            rebuffer_quarter_default_s: 0.0,
            agent_chunks: 0,
            default_chunks: 0,
            sessions: 0,
            clock_ms: 0.0,
        };
        env.decide();
        Ok(env)
    }

    fn decide(&mut self) {
        self.decision = match &mut self.guard {
            Some(g) => g.decide(self.session.buffer_s(), self.epoch, &mut self.guard_rng),
            None => GuardDecision { controller: Controller::Agent, observed_buffer_s: self.session.buffer_s() },
        };
    }

    fn new_session(&mut self) -> Result<()> {
        let trace = self.groups[self.label].generator().generate(SESSION_TRACE_SECS, &mut self.trace_rng)?;
        self.session = AbrSession::new(self.video.clone(), trace, self.penalty)?;
        self.session_label = self.label;
        self.session_converged = self.converged;
        self.session_closed = false;
        if let Some(g) = &mut self.guard {
            g.reset_session();
        }
        Ok(())
    }

    fn close_session(&mut self) {
        let b = self.session.breakdown();
        if b.chunks > 0 && !self.session_closed {
            self.session_closed = true;
            self.samples.push(MetricSample {
                workload: self.session_label,
                value: b.qoe / b.chunks as f64,
                converged: self.session_converged,
            });
            self.sessions += 1;
        }
    }

    pub fn guard(&self) -> Option<&FakeReplayGuard> {
        self.guard.as_ref()
    }
}

impl ControlEnv for AbrEnv {
    fn layout(&self) -> ObsLayout {
        ObsLayout::Flat { width: AbrSession::observation_width(self.video.num_levels()) }
    }

    fn num_actions(&self) -> usize {
        self.video.num_levels()
    }

    fn feature_scales(&self) -> FeatureScales {
        FeatureScales::abr()
    }

    fn begin_epoch(&mut self, epoch: u64, workload: Option<usize>, converged: bool) -> Result<()> {
        self.epoch = epoch;
        self.converged = converged;
        let next = workload.unwrap_or(0);
        if next >= self.groups.len() {
            return Err(crate::Error::config(format!("no user group for workload {next}")));
        }
        if next != self.label || self.session.is_done() {
            self.close_session();
            self.label = next;
            self.new_session()?;
        }
        self.decide();
        Ok(())
    }

    fn observe(&mut self) -> Vec<f64> {
        self.session.observe_with_buffer(self.decision.observed_buffer_s)
    }

    fn features(&self) -> WorkloadFeatures {
        self.tracker.features()
    }

    fn current_label(&self) -> usize {
        self.label
    }

    fn controller(&self) -> Controller {
        self.decision.controller
    }

    fn default_action(&self, _obs: &[f64]) -> usize {
        bba_action(self.session.buffer_s(), &self.video.bitrates_kbps, BBA_RESERVOIR_SECS, BBA_CUSHION_SECS)
    }

    fn step(&mut self, action: usize, acted: Controller) -> Result<StepReport> {
        if let Some(g) = &mut self.guard {
            g.record_buffer(self.session.buffer_s());
        }
        let shown = self.decision.observed_buffer_s;
        let outcome = self.session.advance(action)?;
        // the agent is trained on the buffer it was shown
        let fake = match (&mut self.guard, acted) {
            (Some(g), Controller::Agent) => g.advance_fake(outcome.download_s, self.video.chunk_secs),
            _ => None,
        };
        let reward = match fake {
            Some(_) => {
                outcome.quality
                    - outcome.smoothness_penalty
                    - self.penalty * crate::abr::rebuffer_time(outcome.download_s, shown)
            }
            None => outcome.qoe,
        };
        self.tracker.push(outcome.throughput_kbps);
        self.rebuffer_s += outcome.rebuffer_s;
        if self.epoch < self.quarter_epochs {
            self.rebuffer_quarter_s += outcome.rebuffer_s;
            if acted == Controller::Default {
                self.rebuffer_quarter_default_s += outcome.rebuffer_s;
            }
        }
        match acted {
            Controller::Agent => self.agent_chunks += 1,
            Controller::Default => self.default_chunks += 1,
        }
        if self.session.is_done() {
            self.close_session();
            self.new_session()?;
        }
        self.decide();
        self.clock_ms += (outcome.download_s + outcome.idle_s) * 1000.0;
        let t_ms = self.clock_ms;
        Ok(StepReport { reward, t_ms, metric: Some(outcome.qoe) })
    }

    fn end_epoch(&mut self) -> Result<()> {
        if let Some(g) = &mut self.guard {
            g.end_episode();
        }
        Ok(())
    }

    fn take_metrics(&mut self, flush: bool) -> Vec<MetricSample> {
        if flush {
            self.close_session();
        }
        std::mem::take(&mut self.samples)
    }

    fn workload_name(&self, workload: usize) -> String {
        self.groups.get(workload).map_or_else(|| format!("w{workload}"), |g| g.name().to_string())
    }

    fn detector_components(&self) -> usize {
        self.groups.len()
    }

    fn calibration_features(&mut self, seed: u64) -> Result<Vec<WorkloadFeatures>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut history = Vec::new();
        for group in &self.groups {
            let mut tracker = AbrFeatureTracker::new(FEATURE_SHORT, FEATURE_LONG);
            let mut collected = 0;
            while collected < 40 {
                let trace = group.generator().generate(SESSION_TRACE_SECS, &mut rng)?;
                let mut s = AbrSession::new(self.video.clone(), trace, self.penalty)?;
                while !s.is_done() {
                    let level =
                        bba_action(s.buffer_s(), &self.video.bitrates_kbps, BBA_RESERVOIR_SECS, BBA_CUSHION_SECS);
                    tracker.push(s.advance(level)?.throughput_kbps);
                }
                history.push(tracker.features());
                collected += 1;
            }
        }
        Ok(history)
    }

    fn extras(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::from([
            ("rebuffer_s".to_string(), self.rebuffer_s),
            ("rebuffer_first_quarter_s".to_string(), self.rebuffer_quarter_s),
            ("rebuffer_first_quarter_default_s".to_string(), self.rebuffer_quarter_default_s),
            ("agent_chunks".to_string(), self.agent_chunks as f64),
            ("default_chunks".to_string(), self.default_chunks as f64),
            ("sessions".to_string(), self.sessions as f64),
        ]);
        if let Some(start) = self.guard.as_ref().and_then(FakeReplayGuard::start_threshold) {
            out.insert("guard_start_threshold_s".to_string(), start);
        }
        out
    }
}
