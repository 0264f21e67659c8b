use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exogenous workload descriptors used for environment detection and,
/// optionally, as extra observation inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadFeatures(Vec<f64>);

impl WorkloadFeatures {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::data(format!("workload feature {bad} is not a finite non-negative value")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Fixed per-feature divisors applied before features enter an observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScales(pub Vec<f64>);

impl FeatureScales {
    /// Arrival rate in units of 1000 jobs/s, job size in units of 10 ms.
    pub fn straggler() -> Self {
        Self(vec![1000.0, 10.0])
    }

    /// Bandwidth statistics in units of 5 Mbps.
    pub fn abr() -> Self {
        Self(vec![5000.0; 4])
    }
}

/// Appends normalized features to `obs` when `enabled`; otherwise leaves it
/// untouched.
pub fn augment_observation(
    obs: &mut Vec<f64>,
    features: &WorkloadFeatures,
    scales: &FeatureScales,
    enabled: bool,
) -> Result<()> {
    if !enabled {
        return Ok(());
    }
    if scales.0.len() != features.len() {
        return Err(Error::config(format!(
            "{} feature scales for {} features",
            scales.0.len(),
            features.len()
        )));
    }
    obs.extend(features.values().iter().zip(&scales.0).map(|(v, s)| v / s));
    Ok(())
}

/// Arrival rate and mean job size over the last few action windows,
/// weighting sizes by the number of arrivals.
#[derive(Clone, Debug)]
pub struct StragglerFeatureTracker {
    window: usize,
    rows: VecDeque<(f64, usize, f64)>,
}

impl StragglerFeatureTracker {
    pub fn new(window: usize) -> Self {
        Self { window: window.max(1), rows: VecDeque::new() }
    }

    pub fn clear(&mut self) {
        self.rows.clear();
    }

    /// Records one window: its duration, arrivals and mean arrival size.
    pub fn push(&mut self, window_ms: f64, arrivals: usize, mean_size_ms: f64) {
        if self.rows.len() == self.window {
            self.rows.pop_front();
        }
        self.rows.push_back((window_ms, arrivals, mean_size_ms));
    }

    pub fn features(&self) -> WorkloadFeatures {
        let span: f64 = self.rows.iter().map(|r| r.0).sum();
        let count: usize = self.rows.iter().map(|r| r.1).sum();
        let rate = if span > 0.0 { count as f64 * 1000.0 / span } else { 0.0 };
        let size = if count > 0 {
            self.rows.iter().map(|r| r.1 as f64 * r.2).sum::<f64>() / count as f64
        } else {
            0.0
        };
        WorkloadFeatures(vec![rate, size])
    }
}

/// Mean and standard deviation of measured bandwidth over a short and a long
/// horizon of chunks.
#[derive(Clone, Debug)]
pub struct AbrFeatureTracker {
    short: usize,
    long: usize,
    history: VecDeque<f64>,
}

impl AbrFeatureTracker {
    pub fn new(short: usize, long: usize) -> Self {
        let short = short.max(1);
        Self { short, long: long.max(short), history: VecDeque::new() }
    }

    pub fn push(&mut self, throughput_kbps: f64) {
        if self.history.len() == self.long {
            self.history.pop_front();
        }
        self.history.push_back(throughput_kbps);
    }

    fn moments<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> (f64, f64) {
        let n = values.clone().count();
        if n == 0 {
            return (0.0, 0.0);
        }
        let mean = values.clone().sum::<f64>() / n as f64;
        let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    }

    pub fn features(&self) -> WorkloadFeatures {
        let skip = self.history.len().saturating_sub(self.short);
        let (ms, ss) = Self::moments(self.history.iter().skip(skip));
        let (ml, sl) = Self::moments(self.history.iter());
        WorkloadFeatures(vec![ms, ss, ml, sl])
    }
}
