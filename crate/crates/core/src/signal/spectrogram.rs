use std::sync::Arc;

use rustfft::num_complex::Complex32;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Parameters;

/// Magnitudes below this are treated as silence before taking the log.
pub const AMPLITUDE_FLOOR: f32 = 1e-10;

/// A dB-normalised mel spectrogram, stored row-major as `[band][frame]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
    pub sample_rate_hz: u32,
    pub hop_length: usize,
    pub window_length: usize,
    pub top_db: f64,
    /// Centre time of each frame, in seconds.
    pub frame_times: Vec<f64>,
    /// Centre frequency of each mel band, in Hz.
    pub band_centres_hz: Vec<f64>,
}

impl Spectrogram {
    #[inline]
    pub fn get(&self, band: usize, frame: usize) -> f32 {
        self.values[band * self.cols + frame]
    }

    pub fn row(&self, band: usize) -> &[f32] {
        &self.values[band * self.cols..(band + 1) * self.cols]
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min_value(&self) -> f32 {
        self.values.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn floor_db(&self) -> f32 {
        -(self.top_db as f32)
    }

    /// Rebuilds geometry metadata for a bare matrix (e.g. one read from disk).
    /// `first_frame` is the index of column 0 within the parent spectrogram.
    pub fn from_matrix(
        rows: usize,
        cols: usize,
        values: Vec<f32>,
        p: &Parameters,
        first_frame: usize,
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Range(format!(
                "matrix of {} values cannot be {rows}x{cols}",
                values.len()
            )));
        }
        let bank = MelFilterbank::new(p, rows);
        Ok(Spectrogram {
            rows,
            cols,
            values,
            sample_rate_hz: p.sample_rate_hz,
            hop_length: p.hop_length,
            window_length: p.window_length,
            top_db: p.top_db,
            frame_times: frame_times(first_frame, cols, p.hop_length, p.window_length, p.sample_rate_hz),
            band_centres_hz: bank.centres_hz,
        })
    }

    /// Subtracts the global maximum and clips at `-top_db`.
    pub(crate) fn normalise(&mut self) {
        let max = self.max_value();
        let floor = self.floor_db();
        for v in &mut self.values {
            *v = (*v - max).max(floor);
        }
    }
}

pub(crate) fn frame_times(
    first_frame: usize,
    count: usize,
    hop: usize,
    window: usize,
    sr: u32,
) -> Vec<f64> {
    let sr = f64::from(sr);
    (first_frame..first_frame + count)
        .map(|t| (t * hop) as f64 / sr + window as f64 / (2.0 * sr))
        .collect()
}

/// Number of full frames; no padding of the final partial window.
pub fn frame_count(num_samples: usize, window: usize, hop: usize) -> usize {
    if num_samples < window {
        0
    } else {
        1 + (num_samples - window) / hop
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters evenly spaced on the mel scale between the cut frequencies.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Per band: first FFT bin and the weights from there on.
    pub filters: Vec<(usize, Vec<f32>)>,
    pub centres_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(p: &Parameters, bands: usize) -> Self {
        let lo = hz_to_mel(p.lowcut_hz);
        let hi = hz_to_mel(p.highcut_hz);
        let edges: Vec<f64> = (0..bands + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (bands + 1) as f64))
            .collect();
        let bins = p.fft_size / 2 + 1;
        let bin_hz = f64::from(p.sample_rate_hz) / p.fft_size as f64;

        let mut filters = Vec::with_capacity(bands);
        let mut centres = Vec::with_capacity(bands);
        for b in 0..bands {
            let (l, c, u) = (edges[b], edges[b + 1], edges[b + 2]);
            centres.push(c);
            let first = ((l / bin_hz).floor().max(0.0) as usize).min(bins);
            let last = ((u / bin_hz).ceil() as usize).min(bins - 1);
            let mut weights = Vec::new();
            let mut start = None;
            for k in first..=last {
                let f = k as f64 * bin_hz;
                let w = ((f - l) / (c - l)).min((u - f) / (u - c)).max(0.0);
                if w > 0.0 {
                    start.get_or_insert(k);
                }
                if start.is_some() {
                    weights.push(w as f32);
                }
            }
            while weights.last() == Some(&0.0) {
                weights.pop();
            }
            filters.push((start.unwrap_or(0), weights));
        }
        MelFilterbank {
            filters,
            centres_hz: centres,
        }
    }

    pub fn apply(&self, magnitudes: &[f32], out: &mut [f32]) {
        for ((start, weights), o) in self.filters.iter().zip(out.iter_mut()) {
            *o = weights
                .iter()
                .zip(&magnitudes[*start..])
                .map(|(w, m)| w * m)
                .sum();
        }
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f32> {
    (0..len)
        .map(|n| {
            let x = std::f64::consts::TAU * n as f64 / len as f64;
            (0.5 - 0.5 * x.cos()) as f32
        })
        .collect()
}

/// Reusable FFT plan, window and filterbank for one parameter set.
pub struct SpectrogramPlan {
    fft: Arc<dyn Fft<f32>>,
    window: Vec<f32>,
    bank: MelFilterbank,
    params: Parameters,
}

impl SpectrogramPlan {
    pub fn new(p: &Parameters) -> Result<Self> {
        p.ensure_valid()?;
        let fft = FftPlanner::new().plan_fft_forward(p.fft_size);
        Ok(SpectrogramPlan {
            fft,
            window: hann(p.window_length),
            bank: MelFilterbank::new(p, p.num_mel_bands),
            params: p.clone(),
        })
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    /// STFT magnitude, mel filterbank, `20 log10`, max-subtraction, clip at `-top_db`.
    pub fn compute(&self, audio: &[f32]) -> Result<Spectrogram> {
        let p = &self.params;
        if audio.len() < p.window_length {
            return Err(Error::InputTooShort {
                got: audio.len(),
                need: p.window_length,
            });
        }
        if let Some(i) = audio.iter().position(|s| !s.is_finite()) {
            return Err(Error::Validation(format!("sample {i} is not finite")));
        }
        let frames = frame_count(audio.len(), p.window_length, p.hop_length);
        let bands = p.num_mel_bands;
        let bins = p.fft_size / 2 + 1;

        let mut values = vec![0f32; bands * frames];
        let mut buf = vec![Complex32::default(); p.fft_size];
        let mut scratch = vec![Complex32::default(); self.fft.get_inplace_scratch_len()];
        let mut mags = vec![0f32; bins];
        let mut mel = vec![0f32; bands];

        for t in 0..frames {
            let start = t * p.hop_length;
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = if i < p.window_length {
                    Complex32::new(audio[start + i] * self.window[i], 0.0)
                } else {
                    Complex32::default()
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, c) in mags.iter_mut().zip(&buf[..bins]) {
                *m = c.norm();
            }
            self.bank.apply(&mags, &mut mel);
            for (b, &v) in mel.iter().enumerate() {
                values[b * frames + t] = 20.0 * v.max(AMPLITUDE_FLOOR).log10();
            }
        }

        let mut spec = Spectrogram {
            rows: bands,
            cols: frames,
            values,
            sample_rate_hz: p.sample_rate_hz,
            hop_length: p.hop_length,
            window_length: p.window_length,
            top_db: p.top_db,
            frame_times: frame_times(0, frames, p.hop_length, p.window_length, p.sample_rate_hz),
            band_centres_hz: self.bank.centres_hz.clone(),
        };
        spec.normalise();
        Ok(spec)
    }
}

pub fn compute_spectrogram(audio: &[f32], p: &Parameters) -> Result<Spectrogram> {
    SpectrogramPlan::new(p)?.compute(audio)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(hop: usize) -> Parameters {
        Parameters {
            hop_length: hop,
            ..Default::default()
        }
    }

    #[test]
    fn frame_formula() {
        let s = compute_spectrogram(&vec![0.1; 22050], &params(512)).unwrap();
        assert_eq!(s.cols, 42);
        assert_eq!(s.rows, 224);
        assert_eq!(frame_count(1023, 1024, 128), 0);
        assert_eq!(frame_count(1024, 1024, 128), 1);
    }

    #[test]
    fn silence_is_flat_zero() {
        let s = compute_spectrogram(&vec![0.0; 4096], &params(128)).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_short() {
        let err = compute_spectrogram(&[0.0; 100], &params(128)).unwrap_err();
        assert!(matches!(err, Error::InputTooShort { got: 100, need: 1024 }));
    }

    #[test]
    fn non_finite_rejected() {
        let mut a = vec![0.0; 2048];
        a[7] = f32::NAN;
        assert!(compute_spectrogram(&a, &params(128)).is_err());
    }

    #[test]
    fn normalised_range() {
        let audio: Vec<f32> = (0..8000).map(|i| ((i * 7919) % 1000) as f32 / 1000.0 - 0.5).collect();
        let s = compute_spectrogram(&audio, &params(256)).unwrap();
        assert_eq!(s.max_value(), 0.0);
        assert!(s.min_value() >= -65.0);
    }

    #[test]
    fn mel_round_trip() {
        for hz in [0.0, 440.0, 1000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }

    #[test]
    fn centres_within_band_and_increasing() {
        let p = Parameters::default();
        let bank = MelFilterbank::new(&p, p.num_mel_bands);
        assert!(bank.centres_hz.windows(2).all(|w| w[0] < w[1]));
        assert!(bank.centres_hz[0] > p.lowcut_hz);
        assert!(*bank.centres_hz.last().unwrap() < p.highcut_hz);
    }
}
