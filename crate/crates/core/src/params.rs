//! Tunable signal, segmentation and clustering settings.
//!
//! A parameters file is a flat JSON (or TOML, by `.toml` extension) document
//! whose keys are the field names of [`Parameters`]. Missing keys take their
//! defaults; unknown keys are rejected.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Parameters {
    pub sample_rate_hz: u32,
    pub window_length: usize,
    pub hop_length: usize,
    pub fft_size: usize,
    pub num_mel_bands: usize,
    pub lowcut_hz: f64,
    pub highcut_hz: f64,
    /// Dynamic range kept below the spectrogram maximum, in dB.
    pub top_db: f64,
    /// Activity threshold in dB relative to the spectrogram maximum (negative).
    pub silence_threshold_db: f64,
    pub min_unit_duration_s: f64,
    pub max_unit_duration_s: f64,
    pub min_silence_duration_s: f64,
    pub dereverb_strength: f64,
    pub dereverb_history_frames: usize,
    /// Analyse whole songs (one row per song) instead of individual units.
    pub song_level: bool,
    pub embed_dim: usize,
    /// `None` selects `max(5, 1% of the group's rows)` at clustering time.
    pub min_cluster_size: Option<usize>,
}

impl Default for Parameters {
    fn default() -> Self {
        Parameters {
            sample_rate_hz: 22_050,
            window_length: 1024,
            hop_length: 128,
            fft_size: 1024,
            num_mel_bands: 224,
            lowcut_hz: 1_000.0,
            highcut_hz: 10_000.0,
            top_db: 65.0,
            silence_threshold_db: -25.0,
            min_unit_duration_s: 0.02,
            max_unit_duration_s: 0.4,
            min_silence_duration_s: 0.02,
            dereverb_strength: 0.0,
            dereverb_history_frames: 3,
            song_level: true,
            embed_dim: 10,
            min_cluster_size: None,
        }
    }
}

/// One violated invariant. `fields` names every parameter involved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub fields: Vec<&'static str>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.fields.join(", "), self.message)
    }
}

impl Parameters {
    /// Checks every invariant and returns all violations, not just the first.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut check = |ok: bool, fields: &[&'static str], message: String| {
            if !ok {
                out.push(Violation {
                    fields: fields.to_vec(),
                    message,
                });
            }
        };

        check(
            self.sample_rate_hz > 0,
            &["sample_rate_hz"],
            "must be positive".into(),
        );
        check(
            self.hop_length > 0,
            &["hop_length"],
            "must be positive".into(),
        );
        check(
            self.hop_length <= self.window_length,
            &["hop_length", "window_length"],
            format!(
                "hop_length ({}) must not exceed window_length ({})",
                self.hop_length, self.window_length
            ),
        );
        check(
            self.window_length <= self.fft_size,
            &["window_length", "fft_size"],
            format!(
                "window_length ({}) must not exceed fft_size ({})",
                self.window_length, self.fft_size
            ),
        );
        check(
            self.num_mel_bands > 0,
            &["num_mel_bands"],
            "must be positive".into(),
        );
        check(
            self.lowcut_hz >= 0.0,
            &["lowcut_hz"],
            format!("must be non-negative, got {}", self.lowcut_hz),
        );
        check(
            self.lowcut_hz < self.highcut_hz,
            &["lowcut_hz", "highcut_hz"],
            format!(
                "lowcut_hz ({}) must be below highcut_hz ({})",
                self.lowcut_hz, self.highcut_hz
            ),
        );
        let nyquist = f64::from(self.sample_rate_hz) / 2.0;
        check(
            self.highcut_hz <= nyquist,
            &["highcut_hz", "sample_rate_hz"],
            format!(
                "highcut_hz ({}) must not exceed Nyquist ({nyquist})",
                self.highcut_hz
            ),
        );
        check(
            self.min_unit_duration_s > 0.0,
            &["min_unit_duration_s"],
            "must be positive".into(),
        );
        check(
            self.max_unit_duration_s > self.min_unit_duration_s,
            &["max_unit_duration_s", "min_unit_duration_s"],
            format!(
                "max_unit_duration_s ({}) must exceed min_unit_duration_s ({})",
                self.max_unit_duration_s, self.min_unit_duration_s
            ),
        );
        check(
            self.min_silence_duration_s >= 0.0,
            &["min_silence_duration_s"],
            "must be non-negative".into(),
        );
        check(
            self.silence_threshold_db < 0.0,
            &["silence_threshold_db"],
            format!("must be negative, got {}", self.silence_threshold_db),
        );
        check(
            self.top_db > 0.0,
            &["top_db"],
            format!("must be positive, got {}", self.top_db),
        );
        check(
            (0.0..=1.0).contains(&self.dereverb_strength),
            &["dereverb_strength"],
            format!("must lie in [0, 1], got {}", self.dereverb_strength),
        );
        check(
            self.embed_dim > 0,
            &["embed_dim"],
            "must be positive".into(),
        );
        if let Some(m) = self.min_cluster_size {
            check(
                m >= 2,
                &["min_cluster_size"],
                format!("must be at least 2, got {m}"),
            );
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            let joined: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(Error::Validation(joined.join("; ")))
        }
    }

    /// Loads a parameters file; `.toml` is parsed as TOML, anything else as JSON.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_toml = path
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("toml"));
        if is_toml {
            toml::from_str(&text).map_err(|e| Error::parse(path, e))
        } else {
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
        }
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop_length as f64 / f64::from(self.sample_rate_hz)
    }

    /// Minimum cluster size for a group of `rows` points.
    pub fn min_cluster_size_for(&self, rows: usize) -> usize {
        self.min_cluster_size
            .unwrap_or_else(|| 5.max(rows.div_ceil(100)))
    }
}
