//! Holds each hedging timeout fixed on every workload preset and prints the
//! resulting p95 and peak queue, showing that each preset has its own best
//! timeout.

use tvrl::straggler::{HedgeAction, SimConfig, StragglerSim, WorkloadPreset};
use tvrl::Result;

const WARMUP_WINDOWS: usize = 40;
const WINDOWS: usize = 400;

fn main() -> Result<()> {
    for preset in WorkloadPreset::SCENARIO {
        let params = preset.params();
        println!("workload {} ({} jobs/s, {} ms mean size)", preset.name(), params.rate_per_s, params.mean_size_ms);
        for action in HedgeAction::all() {
            let mut sim = StragglerSim::new(SimConfig { record_events: false, ..SimConfig::default() }, params, 7)?;
            let mut latencies = Vec::new();
            let mut peak = 0;
            for window in 0..WARMUP_WINDOWS + WINDOWS {
                let outcome = sim.step(action)?;
                if window >= WARMUP_WINDOWS {
                    latencies.extend(outcome.latencies);
                }
                peak = peak.max(outcome.peak_queue);
            }
            let p95 = tvrl::stats::percentile(&latencies, 95.0).unwrap_or(f64::NAN);
            println!("  timeout {:>5} ms: p95 {p95:>8.1} ms, peak queue {peak}", action.timeout_ms());
        }
    }
    Ok(())
}
