use std::collections::BTreeMap;

use tvrl::framework::ExpertMode;
use tvrl::harness::{
    aggregate_boxstats, cross_eval, evaluate_straggler_policy, load_expert, normalize_between, oracle_experts,
    run_experiment, sub_seed, EnvKind, EvalSettings, ExperimentConfig, LearnerKind, RunSummary, Scenario,
    ScenarioKind,
};
use tvrl::rl::ReplayKind;
use tvrl::straggler::WorkloadPreset;

/// A scaled-down straggler configuration that runs in seconds.
fn quick(scenario: ScenarioKind, mode: ExpertMode) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk(EnvKind::Straggler, scenario);
    cfg.t_c = 24;
    cfg.episode_len = 16;
    cfg.expert_mode = mode;
    cfg
}

/// Maximal runs of consecutive exploring epochs, per true workload.
fn exploration_spans(summary: &RunSummary) -> BTreeMap<usize, usize> {
    let mut spans = BTreeMap::new();
    let mut previous: Option<(usize, bool)> = None;
    for e in &summary.epochs {
        if e.exploring && previous != Some((e.workload_true, true)) {
            *spans.entry(e.workload_true).or_insert(0) += 1;
        }
        previous = Some((e.workload_true, e.exploring));
    }
    spans
}

#[test]
fn cyclic_multi_expert_explores_each_workload_once() {
    let cfg = quick(ScenarioKind::Cyclic, ExpertMode::Multi);
    let summary = run_experiment(&cfg, None).unwrap();
    assert!(summary.diverged.is_none());
    let spans = exploration_spans(&summary);
    assert_eq!(spans, BTreeMap::from([(0, 1), (1, 1), (2, 1)]));
    for w in 0..3 {
        let explored = summary.epochs.iter().filter(|e| e.workload_true == w && e.exploring).count();
        assert_eq!(explored as u64, cfg.t_c);
    }
}

#[test]
fn dormant_workload_expert_gets_no_batches_while_dormant() {
    let mut cfg = quick(ScenarioKind::DormantReturn, ExpertMode::Multi);
    cfg.learner = LearnerKind::Dqn;
    cfg.buffer = ReplayKind::MultiBuffer;
    let summary = run_experiment(&cfg, None).unwrap();
    let phases = cfg.scenario.phases(cfg.t_c).unwrap();
    let rare = 2;
    let last_c = phases.len() - 1;
    let dormant_start: u64 = phases[..phases.len() - 1 - 2 * cfg.scenario.cycles as usize].iter().map(|p| p.epochs).sum();
    let dormant_end: u64 = phases[..last_c].iter().map(|p| p.epochs).sum();
    let dormant = &summary.epochs[dormant_start as usize..dormant_end as usize];
    assert!(dormant.iter().all(|e| e.workload_true != rare && e.signal != rare));
    assert!(dormant.iter().any(|e| e.batches > 0));
    let c_batches: u64 = summary.epochs.iter().filter(|e| e.signal == rare).map(|e| e.batches).sum();
    assert!(c_batches > 0);
}

#[test]
fn oracle_experts_train_only_on_their_workload() {
    let cfg = quick(ScenarioKind::Cyclic, ExpertMode::Oracle);
    let summary = run_experiment(&cfg, None).unwrap();
    assert!(summary.epochs.iter().all(|e| e.signal == e.workload_true && !e.exploring));
}

#[test]
fn oracle_expert_is_plain_training_on_its_workload() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(ScenarioKind::Cyclic, ExpertMode::Oracle);
    let experts = oracle_experts(&cfg).unwrap();

    let mut plain = quick(ScenarioKind::Stationary, ExpertMode::Multi);
    plain.seed = sub_seed(cfg.seed, 101);
    plain.scenario = Scenario::new(ScenarioKind::Stationary).with_permutation([1, 2, 0]);
    run_experiment(&plain, Some(dir.path())).unwrap();
    let trained = load_expert(&dir.path().join("checkpoints/expert_B.json")).unwrap();
    assert_eq!(serde_json::to_string(&experts[&1]).unwrap(), serde_json::to_string(&trained).unwrap());
}

#[test]
fn same_seed_gives_identical_summaries_and_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = quick(ScenarioKind::Cyclic, ExpertMode::Single);
    run_experiment(&cfg, Some(a.path())).unwrap();
    run_experiment(&cfg, Some(b.path())).unwrap();
    for file in ["summary.csv", "timeseries.csv", "detections.csv"] {
        let left = std::fs::read(a.path().join(file)).unwrap();
        assert!(!left.is_empty(), "{file} is empty");
        assert_eq!(left, std::fs::read(b.path().join(file)).unwrap(), "{file} differs");
    }
    let header = std::fs::read_to_string(a.path().join("summary.csv")).unwrap();
    assert!(header.starts_with("scenario,workload,expert_mode,buffer,seed,p1,p25,p50,p75,p99,mean"));
    let timeseries = std::fs::read_to_string(a.path().join("timeseries.csv")).unwrap();
    assert!(timeseries.starts_with("epoch,t_ms,workload_true,workload_detected,controller,metric"));
}

#[test]
fn schedule_in_the_log_matches_the_declared_phases() {
    let cfg = quick(ScenarioKind::RareNewcomer, ExpertMode::Multi);
    let summary = run_experiment(&cfg, None).unwrap();
    let mut expected = Vec::new();
    for phase in cfg.scenario.phases(cfg.t_c).unwrap() {
        expected.extend(std::iter::repeat_n(phase.workload, phase.epochs as usize));
    }
    let logged: Vec<usize> = summary.epochs.iter().map(|e| e.workload_true).collect();
    assert_eq!(logged, expected);
}

#[test]
fn aggregation_pools_runs_per_group() {
    let cfg = quick(ScenarioKind::Cyclic, ExpertMode::Multi);
    let runs: Vec<RunSummary> = [0, 1]
        .into_iter()
        .map(|seed| run_experiment(&ExperimentConfig { seed, ..cfg.clone() }, None).unwrap())
        .collect();
    let groups = aggregate_boxstats(&runs, |_, workload| workload.to_string());
    assert_eq!(groups.iter().map(|(k, _)| k.as_str()).collect::<Vec<_>>(), vec!["A", "B", "C"]);
    for (name, stats) in groups {
        let mut pooled: Vec<f64> = runs.iter().flat_map(|r| r.samples[&name].clone()).collect();
        pooled.sort_by(f64::total_cmp);
        assert_eq!(stats.p50, tvrl::stats::percentile_sorted(&pooled, 50.0));
    }
}

#[test]
fn cross_evaluation_anchors_and_degradation() {
    let cfg = ExperimentConfig::desk(EnvKind::Straggler, ScenarioKind::Cyclic);
    let experts = oracle_experts(&cfg).unwrap();
    let eval = EvalSettings { windows: 1200, ..EvalSettings::default() };
    let b = WorkloadPreset::B.params();

    let matched = cross_eval(&experts[&1], &experts[&1], b, &eval).unwrap();
    assert_eq!(matched.normalized, 1.0);
    let baseline = evaluate_straggler_policy(None, b, &eval).unwrap();
    assert_eq!(normalize_between(baseline, matched.matched_p95, baseline).unwrap(), 0.0);

    let foreign = cross_eval(&experts[&0], &experts[&1], b, &eval).unwrap();
    assert!(foreign.normalized < 1.0, "{foreign:?}");
}

#[test]
fn missing_checkpoint_is_a_config_error() {
    let err = load_expert(std::path::Path::new("/nonexistent/expert_A.json")).unwrap_err();
    assert!(matches!(err, tvrl::Error::Config(_)));
}
