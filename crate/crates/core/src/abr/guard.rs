use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{buffer_update, MAX_BUFFER_SECS};
use crate::framework::Controller;
use crate::stats::percentile;

/// Who plays the next chunk and which buffer value the agent is shown.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuardDecision {
    pub controller: Controller,
    pub observed_buffer_s: f64,
}

/// Training safeguard for ABR: the buffer-based policy plays whenever the
/// real buffer is below an annealed threshold, and each time the agent gains
/// control it is shown a fictitious, lower buffer so that it still learns
/// low-buffer behavior.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FakeReplayGuard {
    cap_s: f64,
    anneal_epochs: u64,
    calibration_episodes: usize,
    episodes_seen: usize,
    calibration: Vec<f64>,
    start_s: Option<f64>,
    controller: Controller,
    fake_s: Option<f64>,
}

impl FakeReplayGuard {
    /// `cap_s` bounds the starting threshold; it also serves as the
    /// threshold until the calibration episodes are done.
    pub fn new(cap_s: f64, anneal_epochs: u64, calibration_episodes: usize) -> Self {
        Self {
            cap_s,
            anneal_epochs,
            calibration_episodes,
            episodes_seen: 0,
            calibration: Vec::new(),
            start_s: None,
            controller: Controller::Default,
            fake_s: None,
        }
    }

    /// min(20 s, p99 of the first five episodes' buffers), annealed over `anneal_epochs`.
    pub fn standard(anneal_epochs: u64) -> Self {
        Self::new(20.0, anneal_epochs, 5)
    }

    pub fn start_threshold(&self) -> Option<f64> {
        self.start_s
    }

    /// Records a real buffer value during the calibration episodes.
    pub fn record_buffer(&mut self, buffer_s: f64) {
        if self.start_s.is_none() {
            self.calibration.push(buffer_s);
        }
    }

    pub fn end_episode(&mut self) {
        if self.start_s.is_some() {
            return;
        }
        self.episodes_seen += 1;
        if self.episodes_seen >= self.calibration_episodes {
            let p99 = percentile(&self.calibration, 99.0).unwrap_or(self.cap_s);
            self.start_s = Some(p99.min(self.cap_s));
            self.calibration = Vec::new();
        }
    }

    /// Threshold at training epoch `epoch`: non-increasing, 0 from
    /// `anneal_epochs` on.
    pub fn threshold(&self, epoch: u64) -> f64 {
        let start = self.start_s.unwrap_or(self.cap_s);
        if epoch >= self.anneal_epochs {
            return 0.0;
        }
        start * (1.0 - epoch as f64 / self.anneal_epochs as f64)
    }

    pub fn controller(&self) -> Controller {
        self.controller
    }

    pub fn fake_buffer(&self) -> Option<f64> {
        self.fake_s
    }

    /// Decides who plays the next chunk given the real buffer.
    pub fn decide<R: Rng + ?Sized>(&mut self, real_buffer_s: f64, epoch: u64, rng: &mut R) -> GuardDecision {
        let threshold = self.threshold(epoch);
        if threshold <= 0.0 {
            self.controller = Controller::Agent;
            self.fake_s = None;
        } else if real_buffer_s >= threshold {
            if self.controller == Controller::Default {
                self.fake_s = Some(rng.random::<f64>() * real_buffer_s);
            }
            self.controller = Controller::Agent;
        } else {
            self.controller = Controller::Default;
            self.fake_s = None;
        }
        GuardDecision { controller: self.controller, observed_buffer_s: self.fake_s.unwrap_or(real_buffer_s) }
    }

    /// Moves the fictitious buffer through one download; returns the
    /// fictitious rebuffering, or `None` when no ruse is running.
    pub fn advance_fake(&mut self, download_s: f64, chunk_s: f64) -> Option<f64> {
        let fake = self.fake_s?;
        let (next, rebuffer) = buffer_update(fake, download_s, chunk_s);
        self.fake_s = Some(next.min(MAX_BUFFER_SECS));
        Some(rebuffer)
    }

    /// Forgets the running ruse, e.g. at a session boundary.
    pub fn reset_session(&mut self) {
        self.controller = Controller::Default;
        self.fake_s = None;
    }
}
