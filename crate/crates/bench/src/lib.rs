//! Synthetic segmentation throughput suite.
//!
//! Songs are generated from a seed, rendered block by block outside the
//! timed region, and segmented with the pipeline's own spectrogram and unit
//! extraction. Each run hashes its outputs so runs at different worker
//! counts can be compared byte for byte.

use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use vocalis::parallel::{par_map_infallible, JobSpec};
use vocalis::signal::{extract_unit_spectrograms, prepare_spectrogram, segment_into_units, SpectrogramPlan};
use vocalis::synth::{random_song, render, rng, SongShape, SongSpec};
use vocalis::{Parameters, Result};

/// Songs rendered and held in memory at once.
const BLOCK: usize = 128;

#[derive(Debug, Clone, Serialize)]
pub struct ThroughputConfig {
    pub units: usize,
    pub units_per_song: usize,
    pub snr_db: f64,
    pub seed: u64,
}

impl ThroughputConfig {
    pub fn new(units: usize, seed: u64) -> Self {
        ThroughputConfig {
            units,
            units_per_song: 10,
            snr_db: 25.0,
            seed,
        }
    }

    /// Song specs totalling exactly `units` units.
    pub fn songs(&self) -> Vec<SongSpec> {
        let per = self.units_per_song.max(1);
        let shape = SongShape::default();
        let mut r = rng(self.seed);
        let mut out = Vec::with_capacity(self.units.div_ceil(per));
        let mut left = self.units;
        while left > 0 {
            let n = left.min(per);
            out.push(random_song(n, &shape, &mut r));
            left -= n;
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Run {
    pub workers: usize,
    pub units_found: usize,
    pub seconds: f64,
    pub units_per_second: f64,
    /// SHA-256 over every segmentation and unit spectrogram, in song order.
    pub digest: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThroughputReport {
    pub config: ThroughputConfig,
    pub songs: usize,
    pub runs: Vec<Run>,
    pub identical_outputs: bool,
    /// Wall time of the first run over that of the last.
    pub speedup: f64,
}

impl ThroughputReport {
    /// Linear extrapolation of wall time for `units` on `workers`, from the
    /// best measured per-worker rate.
    pub fn extrapolate_seconds(&self, units: usize, workers: usize) -> f64 {
        let per_worker = self
            .runs
            .iter()
            .map(|r| r.units_per_second / r.workers as f64)
            .fold(0.0, f64::max);
        units as f64 / (per_worker * workers as f64)
    }
}

struct Output {
    units: usize,
    bytes: Vec<u8>,
}

fn segment_song(plan: &SpectrogramPlan, p: &Parameters, audio: &[f32]) -> Result<Output> {
    let spec = prepare_spectrogram(plan, audio, p)?;
    let seg = segment_into_units(&spec, p);
    let units = extract_unit_spectrograms(&spec, &seg)?;
    let mut bytes = Vec::new();
    for (on, off) in seg.onsets_s.iter().zip(&seg.offsets_s) {
        bytes.extend_from_slice(&on.to_le_bytes());
        bytes.extend_from_slice(&off.to_le_bytes());
    }
    for u in &units {
        bytes.extend_from_slice(&(u.cols as u64).to_le_bytes());
        for v in &u.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(Output {
        units: units.len(),
        bytes,
    })
}

/// Segments every song with `workers` workers. Only segmentation is timed.
pub fn run(cfg: &ThroughputConfig, songs: &[SongSpec], p: &Parameters, workers: usize) -> Result<Run> {
    let plan = SpectrogramPlan::new(p)?;
    let mut hasher = Sha256::new();
    let mut units_found = 0;
    let mut seconds = 0.0;
    for (b, block) in songs.chunks(BLOCK).enumerate() {
        let items: Vec<(usize, &SongSpec)> = block.iter().enumerate().map(|(i, s)| (b * BLOCK + i, s)).collect();
        let audio = par_map_infallible(&JobSpec::new(items, workers), |_, (i, s)| {
            let mut r = rng(cfg.seed ^ (*i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            render(s, p.sample_rate_hz, cfg.snr_db, &mut r).samples
        });
        let start = Instant::now();
        let outputs = par_map_infallible(&JobSpec::new(audio, workers), |_, a| segment_song(&plan, p, a));
        seconds += start.elapsed().as_secs_f64();
        for o in outputs {
            let o = o?;
            units_found += o.units;
            hasher.update((o.bytes.len() as u64).to_le_bytes());
            hasher.update(&o.bytes);
        }
    }
    Ok(Run {
        workers,
        units_found,
        seconds,
        units_per_second: units_found as f64 / seconds.max(f64::MIN_POSITIVE),
        digest: hex::encode(hasher.finalize()),
    })
}

/// Runs the suite once per worker count, in the given order.
pub fn suite(cfg: &ThroughputConfig, p: &Parameters, worker_counts: &[usize]) -> Result<ThroughputReport> {
    let songs = cfg.songs();
    let runs = worker_counts
        .iter()
        .map(|&w| run(cfg, &songs, p, w))
        .collect::<Result<Vec<_>>>()?;
    let identical_outputs = runs.windows(2).all(|w| w[0].digest == w[1].digest);
    let speedup = match (runs.first(), runs.last()) {
        (Some(a), Some(b)) if b.seconds > 0.0 => a.seconds / b.seconds,
        _ => 1.0,
    };
    Ok(ThroughputReport {
        config: cfg.clone(),
        songs: songs.len(),
        runs,
        identical_outputs,
        speedup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn songs_total_requested_units() {
        let cfg = ThroughputConfig::new(95, 3);
        let songs = cfg.songs();
        assert_eq!(songs.len(), 10);
        assert_eq!(songs.iter().map(|s| s.units.len()).sum::<usize>(), 95);
    }

    #[test]
    fn worker_count_does_not_change_digest() {
        let cfg = ThroughputConfig::new(60, 1);
        let r = suite(&cfg, &Parameters::default(), &[1, 3]).unwrap();
        assert!(r.identical_outputs);
        assert_eq!(r.runs[0].units_found, 60);
    }
}
