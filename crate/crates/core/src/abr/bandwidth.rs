use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Throughput floor so downloads always finish (kbps).
const MIN_KBPS: f64 = 20.0;

/// Markov chain of coarse throughput levels with a mean-reverting
/// (Ornstein-Uhlenbeck) deviation on top.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthGen {
    /// Coarse levels (kbps).
    pub states: Vec<f64>,
    /// Row-stochastic transition kernel, applied once per dwell interval.
    pub kernel: Vec<Vec<f64>>,
    pub dwell_s: u32,
    /// OU noise scale (kbps per sqrt-second).
    pub ou_sigma: f64,
    /// OU dissipation rate (1/s).
    pub ou_theta: f64,
    /// Log-scale spread of the per-session multiplier that makes users differ.
    pub session_spread: f64,
}

impl BandwidthGen {
    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        if n == 0 || self.kernel.len() != n || self.kernel.iter().any(|r| r.len() != n) {
            return Err(Error::config("bandwidth kernel must be square over a non-empty state space"));
        }
        if self.states.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::config("bandwidth states must be positive"));
        }
        for (i, row) in self.kernel.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!("kernel row {i} is not a distribution (sum {sum})")));
            }
        }
        if self.dwell_s == 0 || self.ou_sigma < 0.0 || self.ou_theta <= 0.0 || self.session_spread < 0.0 {
            return Err(Error::config("dwell and OU parameters out of range"));
        }
        Ok(())
    }

    /// Mean throughput of one simulated session's chain, before the multiplier.
    pub fn state_mean(&self) -> f64 {
        self.states.iter().sum::<f64>() / self.states.len() as f64
    }

    /// One session of `duration_s` per-second throughput samples.
    pub fn generate<R: Rng + ?Sized>(&self, duration_s: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.validate()?;
        let scale = if self.session_spread > 0.0 {
            LogNormal::new(0.0, self.session_spread).map_err(|e| Error::config(e.to_string()))?.sample(rng)
        } else {
            1.0
        };
        let mut state = rng.random_range(0..self.states.len());
        let decay = (-self.ou_theta).exp();
        let step_sd = self.ou_sigma * ((1.0 - decay * decay) / (2.0 * self.ou_theta)).sqrt();
        let mut deviation = 0.0;
        let mut out = Vec::with_capacity(duration_s);
        for t in 0..duration_s {
            if t > 0 && t % self.dwell_s as usize == 0 {
                state = sample_row(&self.kernel[state], rng);
            }
            out.push(((self.states[state] + deviation) * scale).max(MIN_KBPS));
            if step_sd > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                deviation = deviation * decay + step_sd * z;
            }
        }
        Ok(out)
    }
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

/// Tridiagonal kernel: stay with `stay`, otherwise move to a neighbor.
fn sticky_kernel(n: usize, stay: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            let neighbors: Vec<usize> = [i.checked_sub(1), (i + 1 < n).then_some(i + 1)].into_iter().flatten().collect();
            if neighbors.is_empty() {
                row[i] = 1.0;
            } else {
                row[i] = stay;
                for &j in &neighbors {
                    row[j] = (1.0 - stay) / neighbors.len() as f64;
                }
            }
            row
        })
        .collect()
}

/// Five user groups differing in average bandwidth, variability within a
/// session and diversity between sessions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UserGroup {
    /// Low bandwidth, high variance, medium diversity.
    Ug1,
    /// High bandwidth, low variance, high diversity.
    Ug2,
    /// Medium bandwidth, medium variance, low diversity.
    Ug3,
    /// Medium-low bandwidth, medium variance, low diversity.
    Ug4,
    /// Medium bandwidth, high variance, very high diversity.
    Ug5,
}

impl UserGroup {
    pub const ALL: [UserGroup; 5] = [UserGroup::Ug1, UserGroup::Ug2, UserGroup::Ug3, UserGroup::Ug4, UserGroup::Ug5];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or_else(|| Error::config(format!("user group index {i} out of 0..5")))
    }

    pub fn name(self) -> &'static str {
        match self {
            UserGroup::Ug1 => "UG1",
            UserGroup::Ug2 => "UG2",
            UserGroup::Ug3 => "UG3",
            UserGroup::Ug4 => "UG4",
            UserGroup::Ug5 => "UG5",
        }
    }

    pub fn generator(self) -> BandwidthGen {
        let (states, stay, sigma, spread): (&[f64], f64, f64, f64) = match self {
            UserGroup::Ug1 => (&[400.0, 700.0, 1000.0, 1400.0], 0.6, 350.0, 0.3),
            UserGroup::Ug2 => (&[3500.0, 4200.0, 5000.0, 6000.0], 0.9, 150.0, 0.5),
            UserGroup::Ug3 => (&[1600.0, 2100.0, 2700.0, 3300.0], 0.75, 300.0, 0.08),
            UserGroup::Ug4 => (&[900.0, 1200.0, 1600.0, 2000.0], 0.75, 250.0, 0.08),
            UserGroup::Ug5 => (&[1400.0, 2000.0, 2800.0, 3600.0], 0.6, 550.0, 0.8),
        };
        BandwidthGen {
            states: states.to_vec(),
            kernel: sticky_kernel(states.len(), stay),
            dwell_s: 5,
            ou_sigma: sigma,
            ou_theta: 0.2,
            session_spread: spread,
        }
    }
}

impl std::str::FromStr for UserGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "UG1" | "1" => Ok(UserGroup::Ug1),
            "UG2" | "2" => Ok(UserGroup::Ug2),
            "UG3" | "3" => Ok(UserGroup::Ug3),
            "UG4" | "4" => Ok(UserGroup::Ug4),
            "UG5" | "5" => Ok(UserGroup::Ug5),
            other => Err(Error::config(format!("unknown user group '{other}'"))),
        }
    }
}

/// Writes `t_s,throughput_kbps`, one row per second.
pub fn write_bandwidth_trace<W: Write>(trace: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_s", "throughput_kbps"])?;
    for (t, kbps) in trace.iter().enumerate() {
        w.write_record([t.to_string(), kbps.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a per-second trace; rows must be positive throughputs.
pub fn read_bandwidth_trace<R: Read>(input: R) -> Result<Vec<f64>> {
    #[derive(Deserialize)]
    struct Row {
        #[allow(dead_code)]
        t_s: f64,
        throughput_kbps: f64,
    }
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(input).deserialize() {
        let row: Row = row?;
        if !(row.throughput_kbps > 0.0) || !row.throughput_kbps.is_finite() {
            return Err(Error::data(format!("non-positive throughput {}", row.throughput_kbps)));
        }
        out.push(row.throughput_kbps);
    }
    if out.is_empty() {
        return Err(Error::data("empty bandwidth trace"));
    }
    Ok(out)
}
