use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::WorkloadFeatures;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub components: usize,
    /// Consecutive windows a different component must win before the
    /// reported environment changes. 1 disables hysteresis.
    pub dwell: usize,
    pub max_iter: usize,
    /// Stop when the mean log-likelihood improves by less than this.
    pub tolerance: f64,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self { components: 3, dwell: 4, max_iter: 300, tolerance: 1e-9, variance_floor: 1e-6, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Result of classifying one feature window.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub posteriors: Vec<f64>,
    /// Maximum-posterior component for this window alone.
    pub candidate: usize,
    /// Environment index after hysteresis.
    pub reported: usize,
}

/// Diagonal-covariance Gaussian mixture over workload features, with dwell
/// hysteresis on the reported component.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GmmDetector {
    config: GmmConfig,
    components: Vec<GmmComponent>,
    reported: Option<usize>,
    pending: Option<(usize, usize)>,
}

fn log_density(x: &[f64], c: &GmmComponent) -> f64 {
    let mut acc = c.weight.ln();
    for ((xi, m), v) in x.iter().zip(&c.mean).zip(&c.variance) {
        acc -= 0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (xi - m).powi(2) / v);
    }
    acc
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl GmmDetector {
    pub fn new(config: GmmConfig) -> Result<Self> {
        if config.components == 0 {
            return Err(Error::config("a mixture needs at least one component"));
        }
        if config.dwell == 0 {
            return Err(Error::config("dwell must be at least 1"));
        }
        Ok(Self { config, components: Vec::new(), reported: None, pending: None })
    }

    pub fn config(&self) -> &GmmConfig {
        &self.config
    }

    pub fn is_fitted(&self) -> bool {
        !self.components.is_empty()
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    /// Fits the mixture by EM. Components are ordered by ascending mean of
    /// the first feature so labels do not depend on initialization.
    pub fn fit(&mut self, history: &[WorkloadFeatures]) -> Result<()> {
        let k = self.config.components;
        if history.len() < 10 * k {
            return Err(Error::data(format!(
                "{} feature windows is too few to fit {k} components (need {})",
                history.len(),
                10 * k
            )));
        }
        let dim = history[0].len();
        if dim == 0 || history.iter().any(|f| f.len() != dim) {
            return Err(Error::data("feature history must have a consistent, non-zero width"));
        }
        let data: Vec<&[f64]> = history.iter().map(WorkloadFeatures::values).collect();
        let n = data.len() as f64;

        let mut global_mean = vec![0.0; dim];
        for x in &data {
            for (g, v) in global_mean.iter_mut().zip(*x) {
                *g += v;
            }
        }
        global_mean.iter_mut().for_each(|g| *g /= n);
        let global_var: Vec<f64> = (0..dim)
            .map(|d| data.iter().map(|x| (x[d] - global_mean[d]).powi(2)).sum::<f64>() / n)
            .collect();

        self.reported = None;
        self.pending = None;
        if global_var.iter().all(|v| *v == 0.0) {
            log::warn!("degenerate feature history (zero variance); falling back to a single component");
            self.components = vec![GmmComponent {
                weight: 1.0,
                mean: global_mean,
                variance: vec![self.config.variance_floor; dim],
            }];
            return Ok(());
        }

        let floor = self.config.variance_floor;
        let init_var: Vec<f64> = global_var.iter().map(|v| v.max(floor)).collect();
        let mut comps: Vec<GmmComponent> = self
            .initial_means(&data, &init_var)
            .into_iter()
            .map(|mean| GmmComponent { weight: 1.0 / k as f64, mean, variance: init_var.clone() })
            .collect();

        let mut resp = vec![vec![0.0; k]; data.len()];
        let mut prev_ll = f64::NEG_INFINITY;
        let mut scratch = vec![0.0; k];
        for _ in 0..self.config.max_iter {
            // E step
            let mut ll = 0.0;
            for (x, r) in data.iter().zip(resp.iter_mut()) {
                for (s, c) in scratch.iter_mut().zip(&comps) {
                    *s = log_density(x, c);
                }
                let norm = log_sum_exp(&scratch);
                ll += norm;
                for (ri, s) in r.iter_mut().zip(&scratch) {
                    *ri = (s - norm).exp();
                }
            }
            ll /= n;
            // M step
            for (j, c) in comps.iter_mut().enumerate() {
                let nk: f64 = resp.iter().map(|r| r[j]).sum();
                if nk <= 0.0 {
                    // an empty component keeps its parameters but loses its weight
                    c.weight = 0.0;
                    continue;
                }
                c.weight = nk / n;
                for d in 0..dim {
                    c.mean[d] = data.iter().zip(&resp).map(|(x, r)| r[j] * x[d]).sum::<f64>() / nk;
                }
                for d in 0..dim {
                    let m = c.mean[d];
                    let var = data.iter().zip(&resp).map(|(x, r)| r[j] * (x[d] - m).powi(2)).sum::<f64>() / nk;
                    c.variance[d] = var.max(floor);
                }
            }
            if (ll - prev_ll).abs() < self.config.tolerance {
                break;
            }
            prev_ll = ll;
        }
        comps.retain(|c| c.weight > 0.0);
        let total: f64 = comps.iter().map(|c| c.weight).sum();
        comps.iter_mut().for_each(|c| c.weight /= total);
        comps.sort_by(|a, b| a.mean[0].total_cmp(&b.mean[0]));
        self.components = comps;
        Ok(())
    }

    /// Seeded k-means++ seeding with distances scaled per dimension.
    fn initial_means(&self, data: &[&[f64]], scale: &[f64]) -> Vec<Vec<f64>> {
        let k = self.config.components;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).zip(scale).map(|((x, y), s)| (x - y).powi(2) / s).sum()
        };
        let mut means = vec![data[rng.random_range(0..data.len())].to_vec()];
        while means.len() < k {
            let d2: Vec<f64> =
                data.iter().map(|x| means.iter().map(|m| dist(x, m)).fold(f64::INFINITY, f64::min)).collect();
            let total: f64 = d2.iter().sum();
            let pick = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut idx = data.len() - 1;
                for (i, d) in d2.iter().enumerate() {
                    if target < *d {
                        idx = i;
                        break;
                    }
                    target -= d;
                }
                idx
            } else {
                rng.random_range(0..data.len())
            };
            means.push(data[pick].to_vec());
        }
        means
    }

    pub fn posteriors(&self, features: &WorkloadFeatures) -> Result<Vec<f64>> {
        if !self.is_fitted() {
            return Err(Error::usage("detector used before it was fitted"));
        }
        let dim = self.components[0].mean.len();
        if features.len() != dim {
            return Err(Error::config(format!("expected {dim} features, got {}", features.len())));
        }
        let logs: Vec<f64> = self.components.iter().map(|c| log_density(features.values(), c)).collect();
        let norm = log_sum_exp(&logs);
        Ok(logs.iter().map(|l| (l - norm).exp()).collect())
    }

    /// Classifies one window and applies the dwell rule.
    pub fn classify(&mut self, features: &WorkloadFeatures) -> Result<Detection> {
        let posteriors = self.posteriors(features)?;
        let candidate = crate::nn::argmax(&posteriors);
        let reported = match self.reported {
            None => candidate,
            Some(current) if candidate == current => {
                self.pending = None;
                current
            }
            Some(current) => {
                let count = match self.pending {
                    Some((c, n)) if c == candidate => n + 1,
                    _ => 1,
                };
                if count >= self.config.dwell {
                    self.pending = None;
                    candidate
                } else {
                    self.pending = Some((candidate, count));
                    current
                }
            }
        };
        self.reported = Some(reported);
        Ok(Detection { posteriors, candidate, reported })
    }

    /// Forgets the hysteresis state (the fitted mixture is kept).
    pub fn reset_tracking(&mut self) {
        self.reported = None;
        self.pending = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn cluster(center: &[f64], spread: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<WorkloadFeatures> {
        (0..count)
            .map(|_| {
                let v = center
                    .iter()
                    .zip(spread)
                    .map(|(c, s)| Normal::new(*c, *s).unwrap().sample(rng).max(0.0))
                    .collect();
                WorkloadFeatures::new(v).unwrap()
            })
            .collect()
    }

    fn f(v: &[f64]) -> WorkloadFeatures {
        WorkloadFeatures::new(v.to_vec()).unwrap()
    }

    #[test]
    fn recovers_two_separated_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data = cluster(&[1000.0, 50.0], &[40.0, 2.0], 200, &mut rng);
        data.extend(cluster(&[100.0, 10.0], &[5.0, 0.5], 200, &mut rng));
        let mut det = GmmDetector::new(GmmConfig { components: 2, ..GmmConfig::default() }).unwrap();
        det.fit(&data).unwrap();
        let c = det.components();
        // canonical order: ascending first-feature mean
        assert!((c[0].mean[0] - 100.0).abs() < 10.0 && (c[0].mean[1] - 10.0).abs() < 1.0);
        assert!((c[1].mean[0] - 1000.0).abs() < 100.0 && (c[1].mean[1] - 50.0).abs() < 5.0);
        let wsum: f64 = c.iter().map(|c| c.weight).sum();
        assert!((wsum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn one_component_is_the_sample_mean() {
        let data: Vec<_> = (0..20).map(|i| f(&[i as f64, 2.0 * i as f64])).collect();
        let mut det = GmmDetector::new(GmmConfig { components: 1, ..GmmConfig::default() }).unwrap();
        det.fit(&data).unwrap();
        let mean: f64 = (0..20).map(|i| i as f64).sum::<f64>() / 20.0;
        assert_eq!(det.components()[0].mean[0], mean);
        assert_eq!(det.components()[0].weight, 1.0);
    }

    #[test]
    fn constant_data_falls_back_to_single_component() {
        let data: Vec<_> = (0..40).map(|_| f(&[5.0, 5.0])).collect();
        let mut det = GmmDetector::new(GmmConfig { components: 3, ..GmmConfig::default() }).unwrap();
        det.fit(&data).unwrap();
        assert_eq!(det.num_components(), 1);
        assert!(det.components()[0].variance.iter().all(|v| *v >= 1e-6));
    }

    #[test]
    fn too_little_history_is_rejected() {
        let data: Vec<_> = (0..29).map(|i| f(&[i as f64])).collect();
        let mut det = GmmDetector::new(GmmConfig { components: 3, ..GmmConfig::default() }).unwrap();
        assert!(det.fit(&data).is_err());
    }

    #[test]
    fn unfitted_detector_refuses_to_classify() {
        let mut det = GmmDetector::new(GmmConfig::default()).unwrap();
        assert!(det.classify(&f(&[1.0])).is_err());
    }

    #[test]
    fn dwell_suppresses_blips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut data = cluster(&[100.0], &[5.0], 50, &mut rng);
        data.extend(cluster(&[500.0], &[5.0], 50, &mut rng));
        let mut det = GmmDetector::new(GmmConfig { components: 2, dwell: 3, ..GmmConfig::default() }).unwrap();
        det.fit(&data).unwrap();
        assert_eq!(det.classify(&f(&[100.0])).unwrap().reported, 0);
        for _ in 0..5 {
            assert_eq!(det.classify(&f(&[500.0])).unwrap().reported, 0);
            assert_eq!(det.classify(&f(&[100.0])).unwrap().reported, 0);
        }
        let seq: Vec<usize> = (0..3).map(|_| det.classify(&f(&[500.0])).unwrap().reported).collect();
        assert_eq!(seq, vec![0, 0, 1]);
    }

    #[test]
    fn refit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut data = cluster(&[10.0, 1.0], &[1.0, 0.1], 60, &mut rng);
        data.extend(cluster(&[20.0, 3.0], &[1.0, 0.1], 60, &mut rng));
        data.extend(cluster(&[40.0, 2.0], &[1.0, 0.1], 60, &mut rng));
        let cfg = GmmConfig { components: 3, seed: 11, ..GmmConfig::default() };
        let mut a = GmmDetector::new(cfg.clone()).unwrap();
        let mut b = GmmDetector::new(cfg).unwrap();
        a.fit(&data).unwrap();
        b.fit(&data).unwrap();
        assert_eq!(a.components(), b.components());
    }
}
