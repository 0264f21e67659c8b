use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{buffer_update, qoe, quality, VideoSpec, MAX_BUFFER_SECS};
use crate::error::{Error, Result};

/// Download history length in the observation.
pub const HISTORY_CHUNKS: usize = 9;

/// What one chunk download did.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkOutcome {
    pub chunk: usize,
    pub level: usize,
    pub download_s: f64,
    pub rebuffer_s: f64,
    /// Buffer after the download and any idle wait.
    pub buffer_s: f64,
    pub idle_s: f64,
    /// Effective throughput of the download (kbps).
    pub throughput_kbps: f64,
    pub qoe: f64,
    pub quality: f64,
    pub smoothness_penalty: f64,
    pub terminal: bool,
}

/// Running QoE terms; `total()` is exactly quality minus smoothness minus
/// penalty times rebuffering.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QoeBreakdown {
    pub quality: f64,
    pub smoothness: f64,
    pub rebuffer_s: f64,
    pub penalty: f64,
    pub qoe: f64,
    pub chunks: usize,
}

impl QoeBreakdown {
    pub fn total(&self) -> f64 {
        self.quality - self.smoothness - self.penalty * self.rebuffer_s
    }
}

/// One streaming session over a per-second bandwidth trace.
#[derive(Clone, Debug)]
pub struct AbrSession {
    video: VideoSpec,
    trace: Vec<f64>,
    penalty: f64,
    clock_s: f64,
    chunk: usize,
    buffer_s: f64,
    prev_level: Option<usize>,
    history: VecDeque<(f64, f64)>,
    breakdown: QoeBreakdown,
    log: Vec<ChunkOutcome>,
}

impl AbrSession {
    pub fn new(video: VideoSpec, trace: Vec<f64>, penalty: f64) -> Result<Self> {
        video.validate()?;
        if trace.is_empty() || trace.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::config("bandwidth trace must be non-empty and positive"));
        }
        if !(penalty >= 0.0) {
            return Err(Error::config("rebuffer penalty must be non-negative"));
        }
        Ok(Self {
            video,
            trace,
            penalty,
            clock_s: 0.0,
            chunk: 0,
            buffer_s: 0.0,
            prev_level: None,
            history: VecDeque::with_capacity(HISTORY_CHUNKS),
            breakdown: QoeBreakdown { penalty, ..QoeBreakdown::default() },
            log: Vec::new(),
        })
    }

    pub fn video(&self) -> &VideoSpec {
        &self.video
    }

    pub fn buffer_s(&self) -> f64 {
        self.buffer_s
    }

    pub fn chunk(&self) -> usize {
        self.chunk
    }

    pub fn is_done(&self) -> bool {
        self.chunk >= self.video.num_chunks()
    }

    pub fn breakdown(&self) -> QoeBreakdown {
        self.breakdown
    }

    pub fn log(&self) -> &[ChunkOutcome] {
        &self.log
    }

    pub fn previous_level(&self) -> Option<usize> {
        self.prev_level
    }

    fn rate_at(&self, t: f64) -> f64 {
        self.trace[(t.floor() as usize) % self.trace.len()]
    }

    /// Seconds to fetch `bytes` starting at the session clock, integrating
    /// the per-second trace (wrapping around at its end).
    pub fn download_time(&self, bytes: f64) -> f64 {
        let mut remaining = bytes * 8.0 / 1000.0;
        let mut t = self.clock_s;
        loop {
            let rate = self.rate_at(t);
            let slot = t.floor() + 1.0 - t;
            if rate * slot >= remaining {
                t += remaining / rate;
                return t - self.clock_s;
            }
            remaining -= rate * slot;
            t = t.floor() + 1.0;
        }
    }

    /// Downloads the next chunk at `level`.
    pub fn advance(&mut self, level: usize) -> Result<ChunkOutcome> {
        if self.is_done() {
            return Err(Error::usage("session already finished"));
        }
        if level >= self.video.num_levels() {
            return Err(Error::config(format!("bitrate level {level} out of range")));
        }
        let bytes = self.video.sizes_bytes[self.chunk][level];
        let download_s = self.download_time(bytes);
        let q = quality(self.video.bitrates_kbps[level]);
        let q_prev = self.prev_level.map_or(q, |l| quality(self.video.bitrates_kbps[l]));
        let reward = qoe(q, q_prev, download_s, self.buffer_s, self.penalty);
        let (mut next, rebuffer_s) = buffer_update(self.buffer_s, download_s, self.video.chunk_secs);
        self.clock_s += download_s;
        let mut idle_s = 0.0;
        if next > MAX_BUFFER_SECS {
            idle_s = next - MAX_BUFFER_SECS;
            next = MAX_BUFFER_SECS;
            self.clock_s += idle_s;
        }
        self.buffer_s = next;
        let throughput_kbps = bytes * 8.0 / 1000.0 / download_s;
        if self.history.len() == HISTORY_CHUNKS {
            self.history.pop_front();
        }
        self.history.push_back((download_s, throughput_kbps));

        let smoothness_penalty = (q - q_prev).abs();
        self.breakdown.quality += q;
        self.breakdown.smoothness += smoothness_penalty;
        self.breakdown.rebuffer_s += rebuffer_s;
        self.breakdown.qoe += reward;
        self.breakdown.chunks += 1;

        let outcome = ChunkOutcome {
            chunk: self.chunk,
            level,
            download_s,
            rebuffer_s,
            buffer_s: next,
            idle_s,
            throughput_kbps,
            qoe: reward,
            quality: q,
            smoothness_penalty,
            terminal: self.chunk + 1 >= self.video.num_chunks(),
        };
        self.prev_level = Some(level);
        self.chunk += 1;
        self.log.push(outcome);
        Ok(outcome)
    }

    /// Observation with the given buffer value (the real one unless a
    /// fictitious buffer is shown): download times and throughputs of the
    /// last chunks, buffer, share of chunks left, previous bitrate and the
    /// next chunk's sizes.
    pub fn observe_with_buffer(&self, buffer_s: f64) -> Vec<f64> {
        let mut obs = Vec::with_capacity(Self::observation_width(self.video.num_levels()));
        let pad = HISTORY_CHUNKS - self.history.len();
        obs.extend(std::iter::repeat_n(0.0, pad));
        obs.extend(self.history.iter().map(|h| h.0 / 10.0));
        obs.extend(std::iter::repeat_n(0.0, pad));
        obs.extend(self.history.iter().map(|h| h.1 / 1000.0));
        obs.push(buffer_s / 10.0);
        let total = self.video.num_chunks();
        obs.push((total - self.chunk.min(total)) as f64 / total as f64);
        let top = *self.video.bitrates_kbps.last().expect("validated ladder");
        obs.push(self.prev_level.map_or(0.0, |l| self.video.bitrates_kbps[l] / top));
        let next = self.chunk.min(total - 1);
        obs.extend(self.video.sizes_bytes[next].iter().map(|b| b / 1e6));
        obs
    }

    pub fn observe(&self) -> Vec<f64> {
        self.observe_with_buffer(self.buffer_s)
    }

    pub fn observation_width(levels: usize) -> usize {
        2 * HISTORY_CHUNKS + 3 + levels
    }
}

/// Writes `chunk,level,download_s,rebuffer_s,buffer_s,qoe`.
pub fn write_session_log<W: Write>(log: &[ChunkOutcome], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["chunk", "level", "download_s", "rebuffer_s", "buffer_s", "qoe"])?;
    for o in log {
        w.write_record([
            o.chunk.to_string(),
            o.level.to_string(),
            o.download_s.to_string(),
            o.rebuffer_s.to_string(),
            o.buffer_s.to_string(),
            o.qoe.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_video(levels: &[f64], chunks: usize) -> VideoSpec {
        VideoSpec {
            chunk_secs: 4.0,
            bitrates_kbps: levels.to_vec(),
            sizes_bytes: vec![levels.iter().map(|k| k * 1000.0 / 8.0 * 4.0).collect(); chunks],
        }
    }

    #[test]
    fn constant_trace_download_time() {
        let s = AbrSession::new(flat_video(&[1000.0, 2000.0], 3), vec![1000.0], 4.3).unwrap();
        // 4000 kbit at 1000 kbps
        assert!((s.download_time(500_000.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn download_integrates_across_seconds() {
        let s = AbrSession::new(flat_video(&[1000.0], 1), vec![1000.0, 3000.0], 4.3).unwrap();
        // 1000 kbit in the first second, then 2000 kbit at 3000 kbps
        let t = s.download_time(3000.0 * 1000.0 / 8.0);
        assert!((t - (1.0 + 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn first_chunk_from_empty_buffer_rebuffers_its_download() {
        let mut s = AbrSession::new(flat_video(&[1000.0, 2000.0], 3), vec![1000.0], 4.3).unwrap();
        let o = s.advance(1).unwrap();
        assert!((o.download_s - 8.0).abs() < 1e-12);
        assert!((o.rebuffer_s - 8.0).abs() < 1e-12);
        assert!((o.buffer_s - 4.0).abs() < 1e-12);
    }

    #[test]
    fn buffer_is_capped_by_idling() {
        let mut s = AbrSession::new(flat_video(&[100.0], 20), vec![10_000.0], 0.0).unwrap();
        for _ in 0..20 {
            let o = s.advance(0).unwrap();
            assert!(o.buffer_s <= MAX_BUFFER_SECS + 1e-12);
        }
        assert!(s.log().iter().any(|o| o.idle_s > 0.0));
    }

    #[test]
    fn breakdown_is_exact() {
        let mut s = AbrSession::new(VideoSpec::default_video(), vec![800.0, 2500.0, 1200.0], 4.3).unwrap();
        let mut level = 0;
        while !s.is_done() {
            s.advance(level).unwrap();
            level = (level + 2) % 6;
        }
        let b = s.breakdown();
        assert!((b.total() - b.qoe).abs() < 1e-9);
    }

    #[test]
    fn observation_width_is_fixed() {
        let mut s = AbrSession::new(VideoSpec::default_video(), vec![1500.0], 4.3).unwrap();
        assert_eq!(s.observe().len(), AbrSession::observation_width(6));
        while !s.is_done() {
            s.advance(2).unwrap();
            assert_eq!(s.observe().len(), AbrSession::observation_width(6));
        }
    }
}
