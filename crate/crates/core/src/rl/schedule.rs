use serde::{Deserialize, Serialize};

/// Linear decay from `start` to exactly zero over `span` epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub start: f64,
    pub span: usize,
}

impl LinearSchedule {
    pub fn value(&self, epoch: usize) -> f64 {
        if epoch >= self.span {
            0.0
        } else {
            self.start * (1.0 - epoch as f64 / self.span as f64)
        }
    }
}

/// Epsilon-greedy schedule: fully random for `random_epochs`, then linear
/// from 1 to 0 over `decay_epochs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub random_epochs: usize,
    pub decay_epochs: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, epoch: usize) -> f64 {
        if epoch < self.random_epochs {
            1.0
        } else {
            LinearSchedule { start: 1.0, span: self.decay_epochs }.value(epoch - self.random_epochs)
        }
    }

    pub fn len(&self) -> usize {
        self.random_epochs + self.decay_epochs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
