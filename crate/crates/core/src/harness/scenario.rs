use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// One workload for the whole run.
    Stationary,
    /// The three workloads in turn, each for `t_sw`, repeated `cycles` times.
    Cyclic,
    /// The first two workloads alternate; the third shows up late, once, and
    /// the first two return afterwards.
    RareNewcomer,
    /// All three cycle once, the third goes dormant while the first two keep
    /// alternating, then it reoccurs.
    DormantReturn,
    /// Continuously drifting arrival rate.
    SmoothDrift,
    /// Idle and rushed regimes alternating much faster than convergence.
    FastSwitch,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Stationary => "stationary",
            ScenarioKind::Cyclic => "I",
            ScenarioKind::RareNewcomer => "II",
            ScenarioKind::DormantReturn => "III",
            ScenarioKind::SmoothDrift => "smooth_drift",
            ScenarioKind::FastSwitch => "fast_switch",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationary" => Ok(ScenarioKind::Stationary),
            "I" | "i" | "1" | "cyclic" => Ok(ScenarioKind::Cyclic),
            "II" | "ii" | "2" | "rare_newcomer" => Ok(ScenarioKind::RareNewcomer),
            "III" | "iii" | "3" | "dormant_return" => Ok(ScenarioKind::DormantReturn),
            "smooth_drift" => Ok(ScenarioKind::SmoothDrift),
            "fast_switch" => Ok(ScenarioKind::FastSwitch),
            other => Err(Error::config(format!("unknown scenario '{other}'"))),
        }
    }
}

/// A stretch of epochs with one active workload.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub workload: usize,
    pub epochs: u64,
}

/// Shape parameters of a switching scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Dwell time of each workload as a multiple of the convergence time.
    pub t_sw: f64,
    /// Repetitions of the basic pattern (scenario I cycles, scenario II
    /// alternations before the newcomer, scenario III dormant cycles,
    /// stationary length in convergence times).
    pub cycles: u32,
    /// Order in which the three workloads take the roles A, B, C.
    pub permutation: [usize; 3],
}

impl Scenario {
    pub fn new(kind: ScenarioKind) -> Self {
        let (t_sw, cycles) = match kind {
            ScenarioKind::Cyclic => (1.0, 2),
            ScenarioKind::RareNewcomer | ScenarioKind::DormantReturn => (0.5, 2),
            ScenarioKind::Stationary => (1.0, 1),
            ScenarioKind::SmoothDrift | ScenarioKind::FastSwitch => (1.0, 3),
        };
        Self { kind, t_sw, cycles, permutation: [0, 1, 2] }
    }

    pub fn with_t_sw(mut self, t_sw: f64) -> Self {
        self.t_sw = t_sw;
        self
    }

    pub fn with_cycles(mut self, cycles: u32) -> Self {
        self.cycles = cycles;
        self
    }

    pub fn with_permutation(mut self, permutation: [usize; 3]) -> Self {
        self.permutation = permutation;
        self
    }

    /// Whether the workload comes from the scripted phase list (as opposed to
    /// a continuous generator).
    pub fn is_phased(&self) -> bool {
        !matches!(self.kind, ScenarioKind::SmoothDrift | ScenarioKind::FastSwitch)
    }

    /// The phase list for convergence time `t_c` (in epochs).
    pub fn phases(&self, t_c: u64) -> Result<Vec<Phase>> {
        if !(self.t_sw > 0.0) || !self.t_sw.is_finite() {
            return Err(Error::config(format!("t_sw must be positive, got {}", self.t_sw)));
        }
        if t_c == 0 || self.cycles == 0 {
            return Err(Error::config("convergence time and cycle count must be positive"));
        }
        let mut sorted = self.permutation;
        sorted.sort_unstable();
        if sorted != [0, 1, 2] {
            return Err(Error::config(format!("{:?} is not a permutation of 0, 1, 2", self.permutation)));
        }
        let sw = ((self.t_sw * t_c as f64).round() as u64).max(1);
        let [a, b, c] = self.permutation;
        let p = |workload, epochs| Phase { workload, epochs };
        let mut out = Vec::new();
        match self.kind {
            ScenarioKind::Stationary => out.push(p(a, t_c * self.cycles as u64)),
            ScenarioKind::Cyclic => {
                for _ in 0..self.cycles {
                    out.extend([p(a, sw), p(b, sw), p(c, sw)]);
                }
            }
            ScenarioKind::RareNewcomer => {
                // enough alternations for both common workloads to converge
                let rounds = (self.cycles as u64).max(t_c.div_ceil(sw));
                for _ in 0..rounds {
                    out.extend([p(a, sw), p(b, sw)]);
                }
                out.push(p(c, t_c + sw));
                out.extend([p(a, sw), p(b, sw)]);
            }
            ScenarioKind::DormantReturn => {
                // C needs its full convergence time before going dormant
                let rounds = t_c.div_ceil(sw);
                for _ in 0..rounds {
                    out.extend([p(a, sw), p(b, sw), p(c, sw)]);
                }
                for _ in 0..self.cycles {
                    out.extend([p(a, sw), p(b, sw)]);
                }
                out.push(p(c, sw));
            }
            ScenarioKind::SmoothDrift | ScenarioKind::FastSwitch => {
                return Err(Error::usage("continuous scenarios have no phase list"));
            }
        }
        Ok(out)
    }

    /// Total epochs of a continuous scenario (`cycles` convergence times).
    pub fn continuous_epochs(&self, t_c: u64) -> u64 {
        t_c * self.cycles as u64
    }
}

/// Epoch-indexed view of a phase list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    phases: Vec<Phase>,
    starts: Vec<u64>,
    total: u64,
}

impl Schedule {
    pub fn new(phases: Vec<Phase>) -> Self {
        let mut starts = Vec::with_capacity(phases.len());
        let mut t = 0;
        for ph in &phases {
            starts.push(t);
            t += ph.epochs;
        }
        Self { phases, starts, total: t }
    }

    pub fn total_epochs(&self) -> u64 {
        self.total
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    /// Index of the phase containing `epoch`.
    pub fn phase_index(&self, epoch: u64) -> Option<usize> {
        if epoch >= self.total {
            return None;
        }
        Some(self.starts.partition_point(|&s| s <= epoch) - 1)
    }

    pub fn workload_at(&self, epoch: u64) -> Option<usize> {
        self.phase_index(epoch).map(|i| self.phases[i].workload)
    }

    pub fn phase_start(&self, index: usize) -> u64 {
        self.starts[index]
    }
}
