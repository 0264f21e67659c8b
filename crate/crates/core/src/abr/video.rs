use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CHUNK_SECS;
use crate::error::{Error, Result};

/// A video: bitrate ladder and per-chunk sizes for every level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoSpec {
    pub chunk_secs: f64,
    pub bitrates_kbps: Vec<f64>,
    /// `sizes_bytes[chunk][level]`.
    pub sizes_bytes: Vec<Vec<f64>>,
}

impl VideoSpec {
    pub const DEFAULT_LADDER: [f64; 6] = [300.0, 750.0, 1200.0, 1850.0, 2850.0, 4300.0];
    pub const DEFAULT_CHUNKS: usize = 49;

    /// Sizes of bitrate times chunk length with independent +-10% jitter.
    pub fn synthetic<R: Rng + ?Sized>(bitrates_kbps: &[f64], chunks: usize, rng: &mut R) -> Result<Self> {
        let sizes = (0..chunks)
            .map(|_| {
                bitrates_kbps
                    .iter()
                    .map(|&kbps| kbps * 1000.0 / 8.0 * CHUNK_SECS * rng.random_range(0.9..1.1))
                    .collect()
            })
            .collect();
        let mut spec = Self { chunk_secs: CHUNK_SECS, bitrates_kbps: bitrates_kbps.to_vec(), sizes_bytes: sizes };
        spec.enforce_increasing();
        spec.validate()?;
        Ok(spec)
    }

    /// The default ladder with a fixed-seed jitter.
    pub fn default_video() -> Self {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0x0d1d_e0);
        Self::synthetic(&Self::DEFAULT_LADDER, Self::DEFAULT_CHUNKS, &mut rng).expect("default ladder is valid")
    }

    // jitter can reorder adjacent levels on narrow ladders
    fn enforce_increasing(&mut self) {
        for row in &mut self.sizes_bytes {
            for l in 1..row.len() {
                if row[l] <= row[l - 1] {
                    row[l] = row[l - 1] * (1.0 + 1e-6);
                }
            }
        }
    }

    pub fn num_chunks(&self) -> usize {
        self.sizes_bytes.len()
    }

    pub fn num_levels(&self) -> usize {
        self.bitrates_kbps.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bitrates_kbps.is_empty() || self.sizes_bytes.is_empty() {
            return Err(Error::config("video needs a bitrate ladder and at least one chunk"));
        }
        if !(self.chunk_secs > 0.0) {
            return Err(Error::config("chunk length must be positive"));
        }
        if self.bitrates_kbps.windows(2).any(|w| w[1] <= w[0]) || !(self.bitrates_kbps[0] > 0.0) {
            return Err(Error::config("bitrates must be positive and strictly increasing"));
        }
        for (i, row) in self.sizes_bytes.iter().enumerate() {
            if row.len() != self.num_levels() {
                return Err(Error::config(format!("chunk {i} has {} sizes", row.len())));
            }
            if !(row[0] > 0.0) || row.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::config(format!("chunk {i} sizes must be positive and increase with level")));
            }
        }
        Ok(())
    }
}

/// Writes `chunk,level0_bytes,...`.
pub fn write_chunk_sizes<W: Write>(video: &VideoSpec, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["chunk".to_string()];
    header.extend((0..video.num_levels()).map(|l| format!("level{l}_bytes")));
    w.write_record(&header)?;
    for (i, row) in video.sizes_bytes.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a chunk-size table for the given ladder.
pub fn read_chunk_sizes<R: Read>(input: R, bitrates_kbps: &[f64]) -> Result<VideoSpec> {
    let mut sizes = Vec::new();
    for rec in csv::Reader::from_reader(input).records() {
        let rec = rec?;
        let row = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>().map_err(|e| Error::data(format!("chunk size '{v}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        sizes.push(row);
    }
    let spec = VideoSpec { chunk_secs: CHUNK_SECS, bitrates_kbps: bitrates_kbps.to_vec(), sizes_bytes: sizes };
    spec.validate().map_err(|e| Error::data(e.to_string()))?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_video_shape() {
        let v = VideoSpec::default_video();
        assert_eq!((v.num_chunks(), v.num_levels()), (49, 6));
        v.validate().unwrap();
    }

    #[test]
    fn chunk_sizes_round_trip() {
        let v = VideoSpec::default_video();
        let mut buf = Vec::new();
        write_chunk_sizes(&v, &mut buf).unwrap();
        let back = read_chunk_sizes(buf.as_slice(), &v.bitrates_kbps).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn decreasing_sizes_rejected() {
        let mut v = VideoSpec::default_video();
        v.sizes_bytes[3].swap(1, 2);
        assert!(v.validate().is_err());
    }
}
