//! Window-level accuracy of the GMM workload detector on labeled synthetic
//! workloads, with and without dwell hysteresis.

use tvrl::harness::detection_accuracy;
use tvrl::straggler::StragglerWorkload;
use tvrl::Result;

fn main() -> Result<()> {
    for dwell in [1, 4] {
        let presets = detection_accuracy(StragglerWorkload::scenario_presets(200), 3, 1800, dwell, 0)?;
        let fast = detection_accuracy(StragglerWorkload::fast_switch(384), 2, 1536, dwell, 0)?;
        let drift = detection_accuracy(StragglerWorkload::smooth_drift(1200), 3, 2400, dwell, 0)?;
        println!(
            "dwell {dwell}: three presets {:.1}%, idle/rushed {:.1}%, drift thirds {:.1}%",
            100.0 * presets,
            100.0 * fast,
            100.0 * drift
        );
    }
    Ok(())
}
