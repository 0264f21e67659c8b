//! Chunked video streaming with a playback buffer, a QoE reward, a
//! buffer-based default policy and a synthetic bandwidth generator.

mod bandwidth;
mod guard;
mod session;
mod video;

pub use bandwidth::{read_bandwidth_trace, write_bandwidth_trace, BandwidthGen, UserGroup};
pub use guard::{FakeReplayGuard, GuardDecision};
pub use session::{write_session_log, AbrSession, ChunkOutcome, QoeBreakdown, HISTORY_CHUNKS};
pub use video::{read_chunk_sizes, write_chunk_sizes, VideoSpec};

/// Seconds of video per chunk.
pub const CHUNK_SECS: f64 = 4.0;
/// The client stops requesting while the buffer is above this (s).
pub const MAX_BUFFER_SECS: f64 = 25.0;
/// Default rebuffering penalty per second.
pub const REBUFFER_PENALTY: f64 = 4.3;
/// Buffer-based default policy: buffer below which the lowest bitrate is used.
pub const BBA_RESERVOIR_SECS: f64 = 5.0;
/// Buffer-based default policy: span over which bitrate rises to the top.
pub const BBA_CUSHION_SECS: f64 = 10.0;

/// Quality units of a bitrate: kbps / 100.
pub fn quality(bitrate_kbps: f64) -> f64 {
    bitrate_kbps / 100.0
}

/// Stalled playback while a chunk of `download_s` downloads with `buffer_s`
/// already buffered.
pub fn rebuffer_time(download_s: f64, buffer_s: f64) -> f64 {
    (download_s - buffer_s).max(0.0)
}

/// Buffer after downloading a chunk: drained by the download, refilled by
/// one chunk. Returns `(next buffer, rebuffer)` before any idle cap.
pub fn buffer_update(buffer_s: f64, download_s: f64, chunk_s: f64) -> (f64, f64) {
    ((buffer_s - download_s).max(0.0) + chunk_s, rebuffer_time(download_s, buffer_s))
}

/// Per-chunk QoE: quality minus the quality change minus the rebuffer penalty.
pub fn qoe(quality: f64, previous_quality: f64, download_s: f64, buffer_s: f64, penalty: f64) -> f64 {
    quality - (quality - previous_quality).abs() - penalty * rebuffer_time(download_s, buffer_s)
}

/// Buffer-based rate selection: lowest level inside the reservoir, highest
/// above reservoir plus cushion, and in between the highest level whose
/// bitrate does not exceed the linear map from buffer to bitrate.
pub fn bba_action(buffer_s: f64, bitrates_kbps: &[f64], reservoir_s: f64, cushion_s: f64) -> usize {
    let top = bitrates_kbps.len().saturating_sub(1);
    if buffer_s <= reservoir_s {
        return 0;
    }
    if buffer_s >= reservoir_s + cushion_s {
        return top;
    }
    let (low, high) = (bitrates_kbps[0], bitrates_kbps[top]);
    let target = low + (high - low) * (buffer_s - reservoir_s) / cushion_s;
    bitrates_kbps.iter().rposition(|&r| r <= target).unwrap_or(0)
}
