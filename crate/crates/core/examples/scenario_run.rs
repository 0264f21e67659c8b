//! A shortened scenario-I run per expert mode, writing the run directories
//! (summary, time series, detections, checkpoints) under the given path.

use std::path::PathBuf;

use tvrl::framework::ExpertMode;
use tvrl::harness::{run_dir_name, run_experiment, EnvKind, ExperimentConfig, ScenarioKind};
use tvrl::Result;

fn main() -> Result<()> {
    let root = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("tvrl-scenario"), PathBuf::from);
    for mode in [ExpertMode::Single, ExpertMode::Multi, ExpertMode::Oracle] {
        let mut cfg = ExperimentConfig::desk(EnvKind::Straggler, ScenarioKind::Cyclic);
        cfg.t_c = 60;
        cfg.expert_mode = mode;
        let dir = root.join(run_dir_name(&cfg));
        let summary = run_experiment(&cfg, Some(&dir))?;
        println!("{} -> {}", mode.name(), dir.display());
        for row in &summary.rows {
            println!("  {}: p25 {:.1}  p50 {:.1}  p75 {:.1} ms", row.workload, row.p25, row.p50, row.p75);
        }
    }
    Ok(())
}
