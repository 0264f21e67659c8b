//! Trains one expert per workload, then evaluates every expert on every
//! workload, normalized between never hedging (0) and the matched expert (1).

use tvrl::harness::{cross_eval, oracle_experts, EnvKind, EvalSettings, ExperimentConfig, ScenarioKind};
use tvrl::straggler::WorkloadPreset;
use tvrl::Result;

fn main() -> Result<()> {
    let mut cfg = ExperimentConfig::desk(EnvKind::Straggler, ScenarioKind::Cyclic);
    cfg.t_c = 150;
    let experts = oracle_experts(&cfg)?;
    let eval = EvalSettings { windows: 1200, ..EvalSettings::default() };
    for (test, preset) in WorkloadPreset::SCENARIO.iter().enumerate() {
        for (train, expert) in &experts {
            match cross_eval(expert, &experts[&test], preset.params(), &eval) {
                Ok(r) => println!(
                    "train {} -> test {}: p95 {:.1} ms (no hedge {:.1}, matched {:.1}), normalized {:.2}",
                    WorkloadPreset::SCENARIO[*train].name(),
                    preset.name(),
                    r.policy_p95,
                    r.baseline_p95,
                    r.matched_p95,
                    r.normalized
                ),
                Err(e) => println!("train {} -> test {}: {e}", WorkloadPreset::SCENARIO[*train].name(), preset.name()),
            }
        }
    }
    Ok(())
}
