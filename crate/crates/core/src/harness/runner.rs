use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agent::{Agent, ObsLayout};
use super::config::{DetectorMode, ExperimentConfig, LearnerKind};
use super::output::{EpochRecord, Recorder, RunKey, RunSummary, SummaryRow};
use super::scenario::Schedule;
use crate::error::{Error, Result};
use crate::framework::{
    augment_observation, Controller, ExpertManager, ExpertMode, FeatureScales, GmmConfig, GmmDetector,
    WorkloadFeatures,
};
use crate::rl::{Experience, OnPolicyBatch, RewardScaler, Rollout};
use crate::stats::BoxStats;

/// Derives an independent seed for a named sub-stream.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Result of one environment step as seen by the control loop.
pub(crate) struct StepReport {
    /// Reward the learner trains on (environment units, unscaled).
    pub reward: f64,
    pub t_ms: f64,
    /// Per-step metric for the time series, if any.
    pub metric: Option<f64>,
}

/// A post-convergence metric sample produced by an environment.
pub(crate) struct MetricSample {
    pub workload: usize,
    pub value: f64,
    pub converged: bool,
}

/// What the control loop needs from an environment.
pub(crate) trait ControlEnv {
    fn layout(&self) -> ObsLayout;
    fn num_actions(&self) -> usize;
    fn feature_scales(&self) -> FeatureScales;
    /// Called before every epoch; `workload` is `None` for continuous scenarios.
    fn begin_epoch(&mut self, epoch: u64, workload: Option<usize>, converged: bool) -> Result<()>;
    fn observe(&mut self) -> Vec<f64>;
    fn features(&self) -> WorkloadFeatures;
    fn current_label(&self) -> usize;
    /// Who decides the next action.
    fn controller(&self) -> Controller;
    fn default_action(&self, obs: &[f64]) -> usize;
    fn step(&mut self, action: usize, acted: Controller) -> Result<StepReport>;
    fn end_epoch(&mut self) -> Result<()>;
    fn take_metrics(&mut self, flush: bool) -> Vec<MetricSample>;
    fn workload_name(&self, workload: usize) -> String;
    fn detector_components(&self) -> usize;
    fn calibration_features(&mut self, seed: u64) -> Result<Vec<WorkloadFeatures>>;
    fn extras(&self) -> BTreeMap<String, f64>;
}

/// How epochs map to workloads.
pub(crate) enum Plan {
    Phased(Schedule),
    Continuous { epochs: u64 },
}

impl Plan {
    fn total_epochs(&self) -> u64 {
        match self {
            Plan::Phased(s) => s.total_epochs(),
            Plan::Continuous { epochs } => *epochs,
        }
    }

    fn workload_at(&self, epoch: u64) -> Option<usize> {
        match self {
            Plan::Phased(s) => s.workload_at(epoch),
            Plan::Continuous { .. } => None,
        }
    }
}

enum Detector {
    Labels { noise: f64, labels: usize },
    Gmm(GmmDetector),
}

/// Trained experts and reward scales handed from one loop to another.
pub(crate) struct Trained {
    pub experts: BTreeMap<usize, Agent>,
    pub scales: BTreeMap<usize, f64>,
}

pub(crate) struct LoopOutput {
    pub summary: RunSummary,
    pub trained: Trained,
}

pub(crate) fn run_key(cfg: &ExperimentConfig) -> RunKey {
    let buffer = match cfg.learner {
        LearnerKind::A2c => "none".to_string(),
        LearnerKind::Dqn => cfg.buffer.name().to_string(),
    };
    RunKey {
        scenario: cfg.scenario.kind.name().to_string(),
        expert_mode: cfg.expert_mode.name().to_string(),
        buffer,
        seed: cfg.seed,
    }
}

/// The observe, detect, gate, act, learn loop.
pub(crate) fn drive<E: ControlEnv>(
    cfg: &ExperimentConfig,
    env: &mut E,
    plan: &Plan,
    mode: ExpertMode,
    pretrained: Option<Trained>,
    out_dir: Option<&Path>,
) -> Result<LoopOutput> {
    let started = Instant::now();
    let mut init_rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, 1));
    let mut act_rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, 2));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, 3));
    let mut replay_rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, 4));

    let scales = env.feature_scales();
    let extra = if cfg.workload_info { scales.0.len() } else { 0 };
    let layout = env.layout().with_extra(extra);
    let actions = env.num_actions();

    let mut manager: ExpertManager<Agent> = ExpertManager::new(mode, cfg.t_c);
    let mut scaler = RewardScaler::new(true);
    if let Some(trained) = pretrained {
        for (env_idx, agent) in trained.experts {
            manager.insert_expert(env_idx, agent, true);
        }
        for (env_idx, s) in trained.scales {
            scaler.set_scale(env_idx, s);
        }
    }

    let mut detector = match cfg.detector {
        DetectorMode::GroundTruth => Detector::Labels { noise: cfg.label_noise, labels: env.detector_components() },
        DetectorMode::Gmm => {
            let history = env.calibration_features(sub_seed(cfg.seed, 5))?;
            let mut det = GmmDetector::new(GmmConfig {
                components: env.detector_components(),
                dwell: cfg.gmm_dwell,
                seed: sub_seed(cfg.seed, 6),
                ..GmmConfig::default()
            })?;
            det.fit(&history)?;
            if let Some(dir) = out_dir {
                crate::nn::checkpoint::save_json(&dir.join("detector.json"), &det)?;
            }
            Detector::Gmm(det)
        }
    };

    let mut recorder = Recorder::new(out_dir)?;
    let mut latest_report = 0usize;
    let mut true_epochs: BTreeMap<usize, u64> = BTreeMap::new();
    let mut epochs = Vec::new();
    let mut samples: Vec<MetricSample> = Vec::new();
    let mut diverged = None;
    let total = plan.total_epochs();

    'epochs: for epoch in 0..total {
        let workload = plan.workload_at(epoch);
        let converged = match workload {
            Some(w) => true_epochs.get(&w).copied().unwrap_or(0) >= cfg.t_c,
            None => epoch >= cfg.t_c,
        };
        env.begin_epoch(epoch, workload, converged)?;
        let true_label = workload.unwrap_or_else(|| env.current_label());

        let signal = match &mut detector {
            Detector::Labels { noise, labels } => {
                if *noise > 0.0 && *labels > 1 && noise_rng.random::<f64>() < *noise {
                    let other = noise_rng.random_range(0..*labels - 1);
                    if other >= true_label {
                        other + 1
                    } else {
                        other
                    }
                } else {
                    true_label
                }
            }
            Detector::Gmm(_) => latest_report,
        };

        let directive = manager.on_environment_signal(signal, || Agent::build(cfg, layout, actions, &mut init_rng))?;
        if directive.exploration_epoch.is_none() {
            scaler.freeze(signal);
        }
        let exploring = directive.exploration_epoch;
        let entropy = match (manager.active_learner()?, exploring) {
            (Agent::A2c(l), Some(e)) => l.entropy_coef(e as usize),
            _ => 0.0,
        };

        let mut batches = 0u64;
        let mut rollout = Rollout::default();
        let mut pending: Option<(Vec<f64>, usize, f64)> = None;
        let mut since_train = 0usize;
        let clip = match cfg.learner {
            LearnerKind::A2c => cfg.a2c.reward_clip,
            LearnerKind::Dqn => cfg.dqn.reward_clip,
        };

        let observe = |env: &mut E| -> Result<Vec<f64>> {
            let mut obs = env.observe();
            augment_observation(&mut obs, &env.features(), &scales, cfg.workload_info)?;
            Ok(obs)
        };

        for _ in 0..cfg.episode_len {
            let obs = observe(env)?;
            let ctrl = env.controller();

            // close the on-policy segment at update points and when the
            // safeguard takes over
            if !rollout.is_empty() && (ctrl == Controller::Default || rollout.len() >= cfg.a2c.steps_per_update) {
                rollout.bootstrap = Some(obs.clone());
                match train_on_policy(&mut manager, signal, std::mem::take(&mut rollout), entropy) {
                    Ok(()) => batches += 1,
                    Err(Error::Divergence(msg)) => {
                        diverged = Some(msg);
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                }
            }
            if let Some((state, action, reward)) = pending.take() {
                let exp = Experience { state, action, reward, next_state: obs.clone(), done: false, env: signal };
                manager.learner_mut(signal).expect("active expert").insert(exp);
            }

            let action = match ctrl {
                Controller::Agent => manager.active_learner()?.act(&obs, exploring, &mut act_rng)?,
                Controller::Default => env.default_action(&obs),
            };
            let report = env.step(action, ctrl)?;
            let reward = scaler.scale_reward(signal, report.reward).clamp(-clip, clip);

            match cfg.learner {
                LearnerKind::A2c => {
                    if ctrl == Controller::Agent {
                        rollout.push(obs, action, reward);
                    }
                }
                LearnerKind::Dqn => {
                    pending = Some((obs, action, reward));
                    since_train += 1;
                    if since_train >= cfg.dqn.train_every {
                        since_train = 0;
                        let agent = manager.route_batch(signal)?;
                        match agent.train_off_policy(&mut replay_rng) {
                            Ok(true) => batches += 1,
                            Ok(false) => {}
                            Err(Error::Divergence(msg)) => {
                                diverged = Some(msg);
                                break 'epochs;
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
            }

            let next_ctrl = env.controller();
            let detected = match &mut detector {
                Detector::Labels { labels, .. } => {
                    if recorder.enabled() {
                        let mut post = vec![0.0; (*labels).max(signal + 1)];
                        post[signal] = 1.0;
                        recorder.detection(report.t_ms, &post, signal, next_ctrl.name())?;
                    }
                    signal
                }
                Detector::Gmm(det) => {
                    let d = det.classify(&env.features())?;
                    latest_report = d.reported;
                    recorder.detection(report.t_ms, &d.posteriors, d.reported, next_ctrl.name())?;
                    d.reported
                }
            };
            let label = workload.unwrap_or_else(|| env.current_label());
            recorder.timeseries(epoch, report.t_ms, label, detected, ctrl.name(), report.metric)?;
        }

        let obs = observe(env)?;
        if !rollout.is_empty() {
            rollout.bootstrap = Some(obs.clone());
            match train_on_policy(&mut manager, signal, rollout, entropy) {
                Ok(()) => batches += 1,
                Err(Error::Divergence(msg)) => {
                    diverged = Some(msg);
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        if let Some((state, action, reward)) = pending.take() {
            let exp = Experience { state, action, reward, next_state: obs, done: false, env: signal };
            manager.learner_mut(signal).expect("active expert").insert(exp);
        }

        env.end_epoch()?;
        manager.finish_epoch()?;
        *true_epochs.entry(true_label).or_default() += 1;
        samples.extend(env.take_metrics(false));
        epochs.push(EpochRecord { epoch, workload_true: true_label, signal, exploring: exploring.is_some(), batches });
    }
    samples.extend(env.take_metrics(true));
    recorder.finish()?;

    let key = run_key(cfg);
    let mut converged: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut all_samples = Vec::new();
    for s in &samples {
        all_samples.push((env.workload_name(s.workload), s.value));
        if s.converged {
            converged.entry(s.workload).or_default().push(s.value);
        }
    }
    let mut rows = Vec::new();
    let mut named = BTreeMap::new();
    for (w, values) in converged {
        let name = env.workload_name(w);
        if let Some(stats) = BoxStats::from_values(&values) {
            rows.push(SummaryRow::from_stats(&key, &name, &stats));
        }
        named.insert(name, values);
    }

    let scales_out = manager.environments().map(|e| (e, scaler.scale_of(e))).collect();
    let summary = RunSummary {
        key,
        rows,
        samples: named,
        all_samples,
        epochs,
        extras: env.extras(),
        diverged,
        wall_clock_s: started.elapsed().as_secs_f64(),
        out_dir: out_dir.map(Path::to_path_buf),
    };
    Ok(LoopOutput { summary, trained: Trained { experts: manager.into_learners(), scales: scales_out } })
}

fn train_on_policy(manager: &mut ExpertManager<Agent>, signal: usize, rollout: Rollout, entropy: f64) -> Result<()> {
    match manager.route_batch(signal)? {
        Agent::A2c(learner) => {
            learner.update(&mut OnPolicyBatch::new(vec![rollout]), entropy)?;
            Ok(())
        }
        Agent::Dqn { .. } => Ok(()),
    }
}
