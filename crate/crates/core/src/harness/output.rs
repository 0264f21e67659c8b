use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::BoxStats;

/// One `summary.csv` row: a workload's post-convergence metric distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub workload: String,
    pub expert_mode: String,
    pub buffer: String,
    pub seed: u64,
    pub p1: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p99: f64,
    pub mean: f64,
}

impl SummaryRow {
    pub fn from_stats(key: &RunKey, workload: &str, stats: &BoxStats) -> Self {
        Self {
            scenario: key.scenario.clone(),
            workload: workload.to_string(),
            expert_mode: key.expert_mode.clone(),
            buffer: key.buffer.clone(),
            seed: key.seed,
            p1: stats.p1,
            p25: stats.p25,
            p50: stats.p50,
            p75: stats.p75,
            p99: stats.p99,
            mean: stats.mean,
        }
    }
}

/// Identifies a run in summary rows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunKey {
    pub scenario: String,
    pub expert_mode: String,
    pub buffer: String,
    pub seed: u64,
}

/// Per-epoch bookkeeping of who was active and who trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub workload_true: usize,
    /// Environment index handed to the expert manager.
    pub signal: usize,
    pub exploring: bool,
    /// Gradient updates applied this epoch.
    pub batches: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub key: RunKey,
    pub rows: Vec<SummaryRow>,
    /// Post-convergence metric samples per workload name.
    pub samples: BTreeMap<String, Vec<f64>>,
    /// Every metric sample, converged or not, as (workload, value).
    pub all_samples: Vec<(String, f64)>,
    pub epochs: Vec<EpochRecord>,
    /// Environment-specific totals (peak queue, cumulative rebuffering, ...).
    pub extras: BTreeMap<String, f64>,
    /// Set when training produced a non-finite loss and the run stopped.
    pub diverged: Option<String>,
    pub wall_clock_s: f64,
    pub out_dir: Option<PathBuf>,
}

impl RunSummary {
    /// Post-convergence median of a workload's metric.
    pub fn median(&self, workload: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.workload == workload).map(|r| r.p50)
    }

    pub fn summary_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_summary_rows(&self.rows, &mut buf)?;
        Ok(buf)
    }
}

pub fn write_summary_rows<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["scenario", "workload", "expert_mode", "buffer", "seed", "p1", "p25", "p50", "p75", "p99", "mean"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_rows(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for r in csv::Reader::from_path(path)?.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

/// Pools the post-convergence samples of several runs per group and returns
/// one box-statistics row per non-empty group.
pub fn aggregate_boxstats<F>(summaries: &[RunSummary], group: F) -> Vec<(String, BoxStats)>
where
    F: Fn(&RunSummary, &str) -> String,
{
    let mut pooled: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in summaries {
        for (workload, values) in &s.samples {
            pooled.entry(group(s, workload)).or_default().extend(values);
        }
    }
    pooled.into_iter().filter_map(|(k, v)| BoxStats::from_values(&v).map(|b| (k, b))).collect()
}

/// Aggregates existing `summary.csv` rows by a key (p50 values pooled).
pub fn aggregate_rows<F>(rows: &[SummaryRow], group: F) -> Vec<(String, BoxStats)>
where
    F: Fn(&SummaryRow) -> String,
{
    let mut pooled: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows {
        pooled.entry(group(r)).or_default().push(r.p50);
    }
    pooled.into_iter().filter_map(|(k, v)| BoxStats::from_values(&v).map(|b| (k, b))).collect()
}

pub fn write_boxstats_csv<W: Write>(groups: &[(String, BoxStats)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "p1", "p25", "p50", "p75", "p99", "mean", "count"])?;
    for (g, b) in groups {
        w.write_record([
            g.clone(),
            b.p1.to_string(),
            b.p25.to_string(),
            b.p50.to_string(),
            b.p75.to_string(),
            b.p99.to_string(),
            b.mean.to_string(),
            b.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Streaming CSV outputs of one run (all optional).
pub(crate) struct Recorder {
    timeseries: Option<csv::Writer<File>>,
    detections: Option<csv::Writer<File>>,
    detection_header_written: bool,
}

impl Recorder {
    pub fn new(dir: Option<&Path>) -> Result<Self> {
        let Some(dir) = dir else {
            return Ok(Self { timeseries: None, detections: None, detection_header_written: false });
        };
        std::fs::create_dir_all(dir)?;
        let mut ts = csv::Writer::from_path(dir.join("timeseries.csv"))?;
        ts.write_record(["epoch", "t_ms", "workload_true", "workload_detected", "controller", "metric"])?;
        let det = csv::Writer::from_path(dir.join("detections.csv"))?;
        Ok(Self { timeseries: Some(ts), detections: Some(det), detection_header_written: false })
    }

    pub fn enabled(&self) -> bool {
        self.timeseries.is_some()
    }

    pub fn timeseries(
        &mut self,
        epoch: u64,
        t_ms: f64,
        workload_true: usize,
        detected: usize,
        controller: &str,
        metric: Option<f64>,
    ) -> Result<()> {
        if let Some(w) = &mut self.timeseries {
            let metric = metric.map(|m| m.to_string()).unwrap_or_default();
            w.write_record([
                epoch.to_string(),
                format!("{t_ms:.3}"),
                workload_true.to_string(),
                detected.to_string(),
                controller.to_string(),
                metric,
            ])?;
        }
        Ok(())
    }

    pub fn detection(&mut self, t_ms: f64, posteriors: &[f64], reported: usize, controller: &str) -> Result<()> {
        if let Some(w) = &mut self.detections {
            if !self.detection_header_written {
                let mut header = vec!["t_ms".to_string()];
                header.extend((0..posteriors.len()).map(|i| format!("posterior_{i}")));
                header.push("reported".into());
                header.push("controller".into());
                w.write_record(&header)?;
                self.detection_header_written = true;
            }
            let mut rec = vec![format!("{t_ms:.3}")];
            rec.extend(posteriors.iter().map(|p| format!("{p:.6}")));
            rec.push(reported.to_string());
            rec.push(controller.to_string());
            w.write_record(&rec)?;
        }
        Ok(())
    }

    pub fn finish(&mut self) -> Result<()> {
        for w in [&mut self.timeseries, &mut self.detections].into_iter().flatten() {
            w.flush()?;
        }
        Ok(())
    }
}

pub(crate) fn write_run_files(dir: &Path, summary: &RunSummary) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let file = File::create(dir.join("summary.csv"))?;
    write_summary_rows(&summary.rows, file)?;
    let status = serde_json::json!({
        "diverged": summary.diverged,
        "extras": summary.extras,
        "wall_clock_s": summary.wall_clock_s,
    });
    std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&status)?)?;
    Ok(())
}

pub(crate) fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(Error::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(samples: &[(&str, Vec<f64>)]) -> RunSummary {
        RunSummary {
            key: RunKey { scenario: "I".into(), expert_mode: "multi".into(), buffer: "none".into(), seed: 0 },
            rows: Vec::new(),
            samples: samples.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            all_samples: Vec::new(),
            epochs: Vec::new(),
            extras: BTreeMap::new(),
            diverged: None,
            wall_clock_s: 0.0,
            out_dir: None,
        }
    }

    #[test]
    fn constant_run_has_flat_box() {
        let s = summary(&[("A", vec![3.0; 10])]);
        let g = aggregate_boxstats(&[s], |_, w| w.to_string());
        let b = g[0].1;
        assert_eq!([b.p1, b.p25, b.p50, b.p75, b.p99], [3.0; 5]);
    }

    #[test]
    fn pooled_percentiles_match_sorting() {
        let a = summary(&[("A", (1..=50).map(f64::from).collect())]);
        let b = summary(&[("A", (51..=100).map(f64::from).collect())]);
        let g = aggregate_boxstats(&[a, b], |_, w| w.to_string());
        let mut all: Vec<f64> = (1..=100).map(f64::from).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(g[0].1.p25, crate::stats::percentile_sorted(&all, 25.0));
        assert_eq!(g[0].1.p99, 99.0);
    }

    #[test]
    fn empty_groups_are_omitted() {
        let s = summary(&[("A", vec![]), ("B", vec![1.0])]);
        let g = aggregate_boxstats(&[s], |_, w| w.to_string());
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].0, "B");
    }
}
