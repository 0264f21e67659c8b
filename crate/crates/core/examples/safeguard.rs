//! The most aggressive hedging timeout under an overloaded workload, with and
//! without the queue-length safeguard.

use tvrl::framework::SafetyConfig;
use tvrl::harness::fixed_action_stress;
use tvrl::straggler::{HedgeAction, WorkloadPreset};
use tvrl::Result;

fn main() -> Result<()> {
    let workload = WorkloadPreset::HighRate.params();
    let action = HedgeAction::new(0)?;
    for enabled in [true, false] {
        let report = fixed_action_stress(action, workload, SafetyConfig { enabled, ..SafetyConfig::default() }, 2000, 1)?;
        println!(
            "safeguard {:<5} max queue {:>6}, most arrivals in one window {}, windows under the default policy {}",
            enabled, report.max_queue, report.max_window_arrivals, report.default_windows
        );
    }
    Ok(())
}
