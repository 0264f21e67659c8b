//! ABR training on one user group with and without the fake-replay guard:
//! rebuffering during the first quarter of training and final QoE.

use tvrl::framework::ExpertMode;
use tvrl::harness::{run_experiment, EnvKind, ExperimentConfig, Scenario, ScenarioKind};
use tvrl::Result;

fn main() -> Result<()> {
    let mut cfg = ExperimentConfig::desk(EnvKind::Abr, ScenarioKind::Stationary);
    cfg.scenario = Scenario::new(ScenarioKind::Stationary).with_cycles(2);
    cfg.expert_mode = ExpertMode::Single;
    for fake_replay in [false, true] {
        cfg.fake_replay = fake_replay;
        let summary = run_experiment(&cfg, None)?;
        let row = &summary.rows[0];
        println!(
            "fake replay {:<5} early rebuffering {:>8.0} s (default policy {:>6.0} s), total {:>8.0} s, final QoE/chunk {:.2}",
            fake_replay,
            summary.extras["rebuffer_first_quarter_s"],
            summary.extras["rebuffer_first_quarter_default_s"],
            summary.extras["rebuffer_s"],
            row.mean
        );
    }
    Ok(())
}
