use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::WorkloadParams;
use crate::error::{Error, Result};

/// Synthetic workload presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WorkloadPreset {
    A,
    B,
    C,
    /// Heavy enough that aggressive hedging without a safeguard blows up the queues.
    HighRate,
}

impl WorkloadPreset {
    pub const SCENARIO: [WorkloadPreset; 3] = [WorkloadPreset::A, WorkloadPreset::B, WorkloadPreset::C];

    pub fn params(self) -> WorkloadParams {
        let (rate_per_s, mean_size_ms, size_sigma) = match self {
            WorkloadPreset::A => (400.0, 5.0, 0.5),
            WorkloadPreset::B => (250.0, 12.0, 0.5),
            WorkloadPreset::C => (1000.0, 4.5, 0.5),
            WorkloadPreset::HighRate => (1100.0, 4.5, 0.5),
        };
        WorkloadParams { rate_per_s, mean_size_ms, size_sigma }
    }

    pub fn name(self) -> &'static str {
        match self {
            WorkloadPreset::A => "A",
            WorkloadPreset::B => "B",
            WorkloadPreset::C => "C",
            WorkloadPreset::HighRate => "high_rate",
        }
    }
}

impl std::str::FromStr for WorkloadPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(WorkloadPreset::A),
            "B" | "b" => Ok(WorkloadPreset::B),
            "C" | "c" => Ok(WorkloadPreset::C),
            "high_rate" => Ok(WorkloadPreset::HighRate),
            other => Err(Error::config(format!("unknown workload preset '{other}'"))),
        }
    }
}

/// One row of a workload trace file, one per 500 ms window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t_ms: f64,
    pub arrivals_per_s: f64,
    pub mean_size_ms: f64,
}

/// A workload as a function of the action-window index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StragglerWorkload {
    /// Stationary phases played one after another, each for `phase_windows`,
    /// cycling back to the first.
    Piecewise { phases: Vec<WorkloadParams>, phase_windows: u64 },
    /// Arrival rate sweeping sinusoidally between `low` and `high` rates.
    SmoothDrift { base: WorkloadParams, low_rate: f64, high_rate: f64, period_windows: u64 },
    /// Alternates between an idle and a rushed regime every `switch_windows`.
    FastSwitch { idle: WorkloadParams, rushed: WorkloadParams, switch_windows: u64 },
    /// Replays recorded per-window rates and sizes (cycling at the end).
    TraceFile { rows: Vec<TraceRow>, size_sigma: f64 },
}

impl StragglerWorkload {
    /// Parameters for window `window` and a ground-truth regime label.
    pub fn at(&self, window: u64) -> Result<(WorkloadParams, usize)> {
        let out = match self {
            StragglerWorkload::Piecewise { phases, phase_windows } => {
                if phases.is_empty() || *phase_windows == 0 {
                    return Err(Error::config("piecewise workload needs phases and a positive phase length"));
                }
                let label = ((window / phase_windows) % phases.len() as u64) as usize;
                (phases[label], label)
            }
            StragglerWorkload::SmoothDrift { base, low_rate, high_rate, period_windows } => {
                if *period_windows == 0 {
                    return Err(Error::config("drift period must be positive"));
                }
                let phase = (window % period_windows) as f64 / *period_windows as f64;
                let level = 0.5 * (1.0 - (2.0 * PI * phase).cos());
                let rate = low_rate + (high_rate - low_rate) * level;
                // three regimes: low, middle and high thirds of the sweep
                let label = ((level * 3.0).floor() as usize).min(2);
                (WorkloadParams { rate_per_s: rate, ..*base }, label)
            }
            StragglerWorkload::FastSwitch { idle, rushed, switch_windows } => {
                if *switch_windows == 0 {
                    return Err(Error::config("switch interval must be positive"));
                }
                if (window / switch_windows) % 2 == 0 {
                    (*idle, 0)
                } else {
                    (*rushed, 1)
                }
            }
            StragglerWorkload::TraceFile { rows, size_sigma } => {
                if rows.is_empty() {
                    return Err(Error::data("empty workload trace"));
                }
                let row = rows[(window % rows.len() as u64) as usize];
                let params =
                    WorkloadParams { rate_per_s: row.arrivals_per_s, mean_size_ms: row.mean_size_ms, size_sigma: *size_sigma };
                (params, 0)
            }
        };
        out.0.validate()?;
        Ok(out)
    }

    pub fn scenario_presets(phase_windows: u64) -> Self {
        StragglerWorkload::Piecewise {
            phases: WorkloadPreset::SCENARIO.iter().map(|p| p.params()).collect(),
            phase_windows,
        }
    }

    /// Slow sinusoidal sweep of preset A's arrival rate.
    pub fn smooth_drift(period_windows: u64) -> Self {
        let base = WorkloadPreset::A.params();
        StragglerWorkload::SmoothDrift { base, low_rate: 100.0, high_rate: 700.0, period_windows }
    }

    /// Idle and rushed regimes of the same job mix.
    pub fn fast_switch(switch_windows: u64) -> Self {
        let idle = WorkloadParams { rate_per_s: 150.0, ..WorkloadPreset::A.params() };
        let rushed = WorkloadParams { rate_per_s: 700.0, ..WorkloadPreset::A.params() };
        StragglerWorkload::FastSwitch { idle, rushed, switch_windows }
    }

    /// Materializes `windows` rows of this workload as a trace.
    pub fn to_trace(&self, windows: u64, window_ms: f64) -> Result<Vec<TraceRow>> {
        (0..windows)
            .map(|w| {
                let (p, _) = self.at(w)?;
                Ok(TraceRow { t_ms: w as f64 * window_ms, arrivals_per_s: p.rate_per_s, mean_size_ms: p.mean_size_ms })
            })
            .collect()
    }
}

pub fn write_trace<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut rows = Vec::new();
    for row in csv::Reader::from_reader(input).deserialize() {
        let row: TraceRow = row?;
        if !(row.arrivals_per_s > 0.0 && row.mean_size_ms > 0.0) {
            return Err(Error::data(format!("trace row at t={} has non-positive rate or size", row.t_ms)));
        }
        rows.push(row);
    }
    Ok(rows)
}
