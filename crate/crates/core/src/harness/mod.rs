//! Experiment orchestration: scenarios, the control loop, oracle baselines,
//! cross-workload evaluation and CSV outputs.

mod abr_env;
mod agent;
mod config;
mod output;
mod runner;
mod scenario;
mod straggler_env;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use abr_env::AbrEnv;
pub use agent::{Agent, ObsLayout};
pub use config::{A2cSettings, DetectorMode, DqnSettings, EnvKind, ExperimentConfig, LearnerKind};
pub use output::{
    aggregate_boxstats, aggregate_rows, read_summary_rows, write_boxstats_csv, write_summary_rows, EpochRecord,
    RunKey, RunSummary, SummaryRow,
};
pub use runner::sub_seed;
pub use scenario::{Phase, Scenario, ScenarioKind, Schedule};
pub use straggler_env::{StragglerEnv, StragglerSource, FEATURE_WINDOWS};

use runner::{drive, ControlEnv, Plan, Trained};
use crate::abr::UserGroup;
use crate::error::{Error, Result};
use crate::framework::{augment_observation, Controller, ExpertMode, GmmConfig, GmmDetector, SafetyConfig};
use crate::nn::checkpoint::{load_json, save_json};
use crate::straggler::{
    windowed_p95, HedgeAction, SimConfig, StragglerWorkload, WorkloadParams, WorkloadPreset, METRIC_WINDOW_ACTIONS,
};

/// Share of the run at the start whose ABR rebuffering is reported apart.
const EARLY_SHARE: f64 = 0.25;

fn plan_for(cfg: &ExperimentConfig) -> Result<Plan> {
    if cfg.scenario.is_phased() {
        Ok(Plan::Phased(Schedule::new(cfg.scenario.phases(cfg.t_c)?)))
    } else {
        Ok(Plan::Continuous { epochs: cfg.scenario.continuous_epochs(cfg.t_c) })
    }
}

fn total_epochs(plan: &Plan) -> u64 {
    match plan {
        Plan::Phased(s) => s.total_epochs(),
        Plan::Continuous { epochs } => *epochs,
    }
}

fn straggler_env(cfg: &ExperimentConfig, plan: &Plan, seed: u64) -> Result<StragglerEnv> {
    let sim = SimConfig::default();
    let source = match cfg.scenario.kind {
        ScenarioKind::SmoothDrift => {
            let period = (total_epochs(plan) * cfg.episode_len as u64).max(1);
            StragglerSource::Generator { workload: StragglerWorkload::smooth_drift(period), regimes: 3, horizon: period }
        }
        ScenarioKind::FastSwitch => {
            let switch = ((0.02 * cfg.t_c as f64 * cfg.episode_len as f64).round() as u64).max(1);
            StragglerSource::Generator {
                workload: StragglerWorkload::fast_switch(switch),
                regimes: 2,
                horizon: 2 * switch,
            }
        }
        _ => StragglerSource::Presets(WorkloadPreset::SCENARIO.iter().map(|p| p.params()).collect()),
    };
    StragglerEnv::new(sim, source, cfg.safeguard, seed)
}

fn abr_env(cfg: &ExperimentConfig, plan: &Plan, seed: u64) -> Result<AbrEnv> {
    let groups = cfg.user_groups.iter().map(|&g| UserGroup::from_index(g)).collect::<Result<Vec<_>>>()?;
    let anneal = cfg.fake_replay.then(|| ((cfg.t_c as f64) * cfg.a2c.entropy_fraction).round() as u64);
    let early = (total_epochs(plan) as f64 * EARLY_SHARE).round() as u64;
    AbrEnv::new(groups, anneal, early, seed)
}

fn drive_config(
    cfg: &ExperimentConfig,
    mode: ExpertMode,
    pretrained: Option<Trained>,
    out_dir: Option<&Path>,
) -> Result<runner::LoopOutput> {
    let plan = plan_for(cfg)?;
    let env_seed = sub_seed(cfg.seed, 0);
    match cfg.env {
        EnvKind::Straggler => {
            let mut env = straggler_env(cfg, &plan, env_seed)?;
            drive(cfg, &mut env, &plan, mode, pretrained, out_dir)
        }
        EnvKind::Abr => {
            let mut env = abr_env(cfg, &plan, env_seed)?;
            drive(cfg, &mut env, &plan, mode, pretrained, out_dir)
        }
    }
}

/// Trains one expert per workload of the schedule on that workload alone.
fn pretrain_oracle(cfg: &ExperimentConfig) -> Result<Trained> {
    let mut workloads: Vec<usize> = cfg.scenario.phases(cfg.t_c)?.iter().map(|p| p.workload).collect();
    workloads.sort_unstable();
    workloads.dedup();
    let mut trained = Trained { experts: Default::default(), scales: Default::default() };
    for w in workloads {
        let mut pre = cfg.clone();
        pre.scenario = Scenario::new(ScenarioKind::Stationary).with_permutation([w, (w + 1) % 3, (w + 2) % 3]);
        pre.expert_mode = ExpertMode::Multi;
        pre.seed = sub_seed(cfg.seed, 100 + w as u64);
        let out = drive_config(&pre, ExpertMode::Multi, None, None)?;
        if let Some(msg) = out.summary.diverged {
            return Err(Error::divergence(format!("oracle pretraining on workload {w}: {msg}")));
        }
        let mut t = out.trained;
        let expert = t.experts.remove(&w).ok_or_else(|| Error::data(format!("no expert for workload {w}")))?;
        trained.experts.insert(w, expert);
        if let Some(scale) = t.scales.remove(&w) {
            trained.scales.insert(w, scale);
        }
    }
    Ok(trained)
}

/// The oracle baseline's experts, keyed by workload index: each is trained
/// alone on a stationary run of its workload with a seed derived from
/// `cfg.seed`.
pub fn oracle_experts(cfg: &ExperimentConfig) -> Result<std::collections::BTreeMap<usize, Agent>> {
    cfg.validate()?;
    Ok(pretrain_oracle(cfg)?.experts)
}

fn checkpoint_name(cfg: &ExperimentConfig, env: usize, workload_name: &str) -> String {
    match (cfg.expert_mode, cfg.detector) {
        (ExpertMode::Single, _) => "expert_shared.json".to_string(),
        (_, DetectorMode::Gmm) => format!("expert_env{env}.json"),
        _ => format!("expert_{workload_name}.json"),
    }
}

/// Runs one experiment. With `out_dir`, writes `summary.csv`,
/// `timeseries.csv`, `detections.csv`, `config.json`, `run.json` and the
/// expert checkpoints there. A diverged run returns normally with
/// `diverged` set.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunSummary> {
    cfg.validate()?;
    if let Some(dir) = out_dir {
        output::ensure_dir(dir)?;
        save_json(dir.join("config.json"), cfg)?;
    }
    let pretrained = match cfg.expert_mode {
        ExpertMode::Oracle => match pretrain_oracle(cfg) {
            Ok(t) => Some(t),
            Err(Error::Divergence(msg)) => {
                let summary = diverged_summary(cfg, msg, out_dir);
                if let Some(dir) = out_dir {
                    output::write_run_files(dir, &summary)?;
                }
                return Ok(summary);
            }
            Err(e) => return Err(e),
        },
        _ => None,
    };
    let out = drive_config(cfg, cfg.expert_mode, pretrained, out_dir)?;
    if let Some(dir) = out_dir {
        output::write_run_files(dir, &out.summary)?;
        if cfg.write_checkpoints {
            let ckpt = dir.join("checkpoints");
            output::ensure_dir(&ckpt)?;
            let names = workload_names(cfg);
            for (env, agent) in &out.trained.experts {
                let name = names.get(*env).cloned().unwrap_or_else(|| format!("w{env}"));
                save_json(ckpt.join(checkpoint_name(cfg, *env, &name)), agent)?;
            }
        }
    }
    Ok(out.summary)
}

fn diverged_summary(cfg: &ExperimentConfig, msg: String, out_dir: Option<&Path>) -> RunSummary {
    RunSummary {
        key: runner::run_key(cfg),
        rows: Vec::new(),
        samples: Default::default(),
        all_samples: Vec::new(),
        epochs: Vec::new(),
        extras: Default::default(),
        diverged: Some(msg),
        wall_clock_s: 0.0,
        out_dir: out_dir.map(Path::to_path_buf),
    }
}

/// Names of the workload indices used in outputs.
pub fn workload_names(cfg: &ExperimentConfig) -> Vec<String> {
    match (cfg.env, cfg.scenario.kind) {
        (EnvKind::Abr, _) => cfg
            .user_groups
            .iter()
            .map(|&g| UserGroup::from_index(g).map_or_else(|_| format!("w{g}"), |u| u.name().to_string()))
            .collect(),
        (EnvKind::Straggler, ScenarioKind::SmoothDrift | ScenarioKind::FastSwitch) => {
            (0..3).map(|i| format!("regime{i}")).collect()
        }
        _ => WorkloadPreset::SCENARIO.iter().map(|p| p.name().to_string()).collect(),
    }
}

/// A conventional run directory name.
pub fn run_dir_name(cfg: &ExperimentConfig) -> String {
    let [a, b, c] = cfg.scenario.permutation;
    let buffer = match cfg.learner {
        LearnerKind::A2c => "a2c".to_string(),
        LearnerKind::Dqn => format!("dqn-{}", cfg.buffer.name()),
    };
    format!("{}_{}_{}_p{a}{b}{c}_s{}", cfg.scenario.kind.name(), cfg.expert_mode.name(), buffer, cfg.seed)
}

/// Runs experiments in parallel, each in its own directory under `out_root`.
/// Results come back in input order.
pub fn run_many(configs: &[ExperimentConfig], out_root: Option<&Path>) -> Vec<Result<RunSummary>> {
    configs
        .par_iter()
        .map(|cfg| {
            let dir: Option<PathBuf> = out_root.map(|root| root.join(run_dir_name(cfg)));
            run_experiment(cfg, dir.as_deref())
        })
        .collect()
}

/// Evaluation settings for frozen straggler policies.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub windows: usize,
    pub warmup_windows: usize,
    pub seed: u64,
    pub workload_info: bool,
    pub safeguard: SafetyConfig,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            windows: 3 * METRIC_WINDOW_ACTIONS,
            warmup_windows: 40,
            seed: 0,
            workload_info: false,
            safeguard: SafetyConfig::default(),
        }
    }
}

/// Mean windowed p95 latency of a frozen greedy policy (or of never hedging
/// when `policy` is `None`) on a stationary workload.
pub fn evaluate_straggler_policy(policy: Option<&Agent>, workload: WorkloadParams, eval: &EvalSettings) -> Result<f64> {
    let mut env = StragglerEnv::new(
        SimConfig::default(),
        StragglerSource::Presets(vec![workload]),
        eval.safeguard,
        sub_seed(eval.seed, 20),
    )?;
    let scales = env.feature_scales();
    env.begin_epoch(0, Some(0), true)?;
    let mut windows: Vec<Vec<f64>> = Vec::with_capacity(eval.windows);
    for i in 0..eval.warmup_windows + eval.windows {
        let mut obs = env.observe();
        augment_observation(&mut obs, &env.features(), &scales, eval.workload_info)?;
        let ctrl = env.controller();
        let action = match (policy, ctrl) {
            (Some(agent), Controller::Agent) => agent.greedy(&obs)?,
            _ => env.default_action(&obs),
        };
        env.step(action, ctrl)?;
        let lat = env.take_window_latencies();
        if i >= eval.warmup_windows {
            windows.push(lat);
        }
    }
    let p95s = windowed_p95(windows.iter().map(Vec::as_slice), METRIC_WINDOW_ACTIONS);
    crate::stats::mean(&p95s).ok_or_else(|| Error::data("evaluation produced no latency samples"))
}

/// Queue and arrival extremes of a fixed hedging action held for `windows`
/// action windows on a stationary workload, with or without the safeguard.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StressReport {
    /// Largest queue length at any instant.
    pub max_queue: usize,
    /// Most arrivals seen in a single action window.
    pub max_window_arrivals: usize,
    /// Windows in which the default policy was in control.
    pub default_windows: u64,
}

pub fn fixed_action_stress(
    action: HedgeAction,
    workload: WorkloadParams,
    safeguard: SafetyConfig,
    windows: usize,
    seed: u64,
) -> Result<StressReport> {
    let mut env = StragglerEnv::new(SimConfig::default(), StragglerSource::Presets(vec![workload]), safeguard, seed)?;
    env.begin_epoch(0, Some(0), true)?;
    for _ in 0..windows {
        let obs = env.observe();
        let ctrl = env.controller();
        let chosen = match ctrl {
            Controller::Agent => action.index(),
            Controller::Default => env.default_action(&obs),
        };
        env.step(chosen, ctrl)?;
    }
    let extras = env.extras();
    Ok(StressReport {
        max_queue: extras["max_peak_queue"] as usize,
        max_window_arrivals: extras["max_window_arrivals"] as usize,
        default_windows: extras["default_windows"] as u64,
    })
}

/// Window-level accuracy of the GMM detector on a labeled workload generator.
///
/// The detector is calibrated the same way as in a run, then classifies every
/// action window of `windows` under the never-hedge policy. Component indices
/// carry no names, so accuracy is taken under the best one-to-one matching of
/// components to regimes.
pub fn detection_accuracy(
    workload: StragglerWorkload,
    regimes: usize,
    windows: u64,
    dwell: usize,
    seed: u64,
) -> Result<f64> {
    if windows == 0 {
        return Err(Error::config("detection accuracy needs at least one window"));
    }
    let source = StragglerSource::Generator { workload, regimes, horizon: windows };
    let safeguard = SafetyConfig { enabled: false, ..SafetyConfig::default() };
    let mut env = StragglerEnv::new(SimConfig::default(), source, safeguard, sub_seed(seed, 20))?;
    let mut detector =
        GmmDetector::new(GmmConfig { components: regimes, dwell, seed: sub_seed(seed, 6), ..GmmConfig::default() })?;
    detector.fit(&env.calibration_features(sub_seed(seed, 5))?)?;
    let mut confusion = vec![vec![0u64; regimes]; regimes];
    for _ in 0..windows {
        env.step(HedgeAction::NO_HEDGE.index(), Controller::Agent)?;
        let reported = detector.classify(&env.features())?.reported;
        confusion[reported][env.current_label()] += 1;
    }
    let best = best_matching(&confusion, 0, &mut vec![false; regimes]);
    Ok(best as f64 / windows as f64)
}

/// Largest total of `confusion[row][perm(row)]` over one-to-one assignments.
fn best_matching(confusion: &[Vec<u64>], row: usize, used: &mut Vec<bool>) -> u64 {
    if row == confusion.len() {
        return 0;
    }
    let mut best = 0;
    for col in 0..used.len() {
        if !used[col] {
            used[col] = true;
            best = best.max(confusion[row][col] + best_matching(confusion, row + 1, used));
            used[col] = false;
        }
    }
    best
}

/// Result of evaluating a policy trained on one workload on another.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossEval {
    pub baseline_p95: f64,
    pub policy_p95: f64,
    pub matched_p95: f64,
    /// 0 = no better than never hedging, 1 = as good as the matched policy.
    pub normalized: f64,
}

/// Normalizes `policy` between the no-hedge baseline (0) and `matched` (1).
pub fn normalize_between(baseline: f64, matched: f64, policy: f64) -> Result<f64> {
    let span = baseline - matched;
    if span.abs() < 1e-12 {
        return Err(Error::data("matched policy is indistinguishable from the no-hedge baseline"));
    }
    Ok((baseline - policy) / span)
}

/// Evaluates the frozen `train` policy on `test` and normalizes it between
/// never hedging and the `matched` policy trained on `test`.
pub fn cross_eval(train: &Agent, matched: &Agent, test: WorkloadParams, eval: &EvalSettings) -> Result<CrossEval> {
    let baseline_p95 = evaluate_straggler_policy(None, test, eval)?;
    let policy_p95 = evaluate_straggler_policy(Some(train), test, eval)?;
    let matched_p95 = evaluate_straggler_policy(Some(matched), test, eval)?;
    let normalized = normalize_between(baseline_p95, matched_p95, policy_p95)?;
    Ok(CrossEval { baseline_p95, policy_p95, matched_p95, normalized })
}

/// Loads an expert checkpoint written by [`run_experiment`].
pub fn load_expert(path: &Path) -> Result<Agent> {
    if !path.exists() {
        return Err(Error::config(format!("checkpoint {} does not exist", path.display())));
    }
    load_json(path)
}
