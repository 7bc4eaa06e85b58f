//! Synthetic songs, repertoires and corpora with known ground truth.
//!
//! Everything here is seeded and reproducible. Used by tests, the throughput
//! benchmark, and `init --sample`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde_json::json;

use crate::error::{Error, Result};
use crate::project::ProjectDirs;
use crate::wav::{write_wav, Audio};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One tonal element; a chirp when the two frequencies differ.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSpec {
    pub duration_s: f64,
    pub start_hz: f64,
    pub end_hz: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SongSpec {
    pub lead_s: f64,
    pub units: Vec<UnitSpec>,
    /// Silence after each unit except the last.
    pub gaps_s: Vec<f64>,
    pub tail_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedSong {
    pub samples: Vec<f32>,
    /// Ground-truth `[start, end)` sample ranges of each unit.
    pub boundaries: Vec<(usize, usize)>,
}

/// Ramp applied to unit edges to avoid clicks.
const RAMP_S: f64 = 0.002;

/// Renders a song and adds white Gaussian noise `snr_db` below the mean unit power.
pub fn render(song: &SongSpec, sample_rate_hz: u32, snr_db: f64, rng: &mut impl Rng) -> RenderedSong {
    let sr = f64::from(sample_rate_hz);
    let total_s = song.lead_s + song.units.iter().map(|u| u.duration_s).sum::<f64>()
        + song.gaps_s.iter().sum::<f64>()
        + song.tail_s;
    let mut samples = vec![0f32; (total_s * sr).ceil() as usize];
    let mut boundaries = Vec::with_capacity(song.units.len());
    let ramp = (RAMP_S * sr) as usize;

    let mut t = song.lead_s;
    let mut power = 0.0;
    for (i, unit) in song.units.iter().enumerate() {
        let start = (t * sr).round() as usize;
        let end = ((t + unit.duration_s) * sr).round() as usize;
        let len = end - start;
        let mut phase = 0.0f64;
        for n in 0..len {
            let frac = n as f64 / len as f64;
            let freq = unit.start_hz + (unit.end_hz - unit.start_hz) * frac;
            phase += std::f64::consts::TAU * freq / sr;
            let edge = n.min(len - 1 - n);
            let gain = if edge < ramp {
                0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            samples[start + n] = (unit.amplitude * gain * phase.sin()) as f32;
        }
        power += unit.amplitude * unit.amplitude / 2.0;
        boundaries.push((start, end));
        t += unit.duration_s + song.gaps_s.get(i).copied().unwrap_or(0.0);
    }

    if !song.units.is_empty() && snr_db.is_finite() {
        let noise_power = power / song.units.len() as f64 / 10f64.powf(snr_db / 10.0);
        let noise = Normal::new(0.0, noise_power.sqrt()).expect("finite sigma");
        for s in &mut samples {
            *s += noise.sample(rng) as f32;
        }
    }
    RenderedSong {
        samples,
        boundaries,
    }
}

/// Unit and gap ranges for random songs.
#[derive(Debug, Clone)]
pub struct SongShape {
    pub unit_s: (f64, f64),
    pub gap_s: (f64, f64),
    pub freq_hz: (f64, f64),
    pub amplitude: (f64, f64),
    pub chirp_probability: f64,
}

impl Default for SongShape {
    fn default() -> Self {
        SongShape {
            unit_s: (0.05, 0.18),
            gap_s: (0.06, 0.15),
            freq_hz: (2_500.0, 7_500.0),
            amplitude: (0.3, 0.8),
            chirp_probability: 0.4,
        }
    }
}

pub fn random_unit(shape: &SongShape, rng: &mut impl Rng) -> UnitSpec {
    let start_hz = rng.random_range(shape.freq_hz.0..shape.freq_hz.1);
    let end_hz = if rng.random_bool(shape.chirp_probability) {
        (start_hz * rng.random_range(0.75..1.3)).clamp(shape.freq_hz.0, shape.freq_hz.1)
    } else {
        start_hz
    };
    UnitSpec {
        duration_s: rng.random_range(shape.unit_s.0..shape.unit_s.1),
        start_hz,
        end_hz,
        amplitude: rng.random_range(shape.amplitude.0..shape.amplitude.1),
    }
}

pub fn random_song(units: usize, shape: &SongShape, rng: &mut impl Rng) -> SongSpec {
    SongSpec {
        lead_s: rng.random_range(0.08..0.2),
        units: (0..units).map(|_| random_unit(shape, rng)).collect(),
        gaps_s: (0..units.saturating_sub(1))
            .map(|_| rng.random_range(shape.gap_s.0..shape.gap_s.1))
            .collect(),
        tail_s: rng.random_range(0.08..0.2),
    }
}

/// A rendition of `template` with small random timing, pitch and level variation.
pub fn jitter(template: &SongSpec, rng: &mut impl Rng) -> SongSpec {
    let mut song = template.clone();
    for u in &mut song.units {
        let pitch = rng.random_range(0.985..1.015);
        u.start_hz *= pitch;
        u.end_hz *= pitch;
        u.duration_s *= rng.random_range(0.95..1.05);
        u.amplitude *= rng.random_range(0.85..1.0);
    }
    for g in &mut song.gaps_s {
        *g *= rng.random_range(0.9..1.1);
    }
    song.lead_s = rng.random_range(0.08..0.2);
    song.tail_s = rng.random_range(0.08..0.2);
    song
}

/// Labelled points drawn around `types` random templates in `dims` dimensions.
///
/// Template coordinates are uniform in `[-separation, separation]`; each
/// point adds isotropic Gaussian noise with standard deviation `noise`.
pub fn repertoire_points(
    types: usize,
    per_type: &[usize],
    dims: usize,
    separation: f64,
    noise: f64,
    rng: &mut impl Rng,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let templates: Vec<Vec<f64>> = (0..types)
        .map(|_| (0..dims).map(|_| rng.random_range(-separation..separation)).collect())
        .collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (label, template) in templates.iter().enumerate() {
        for _ in 0..per_type[label] {
            rows.push(
                template
                    .iter()
                    .map(|c| c + noise * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            labels.push(label);
        }
    }
    (rows, labels)
}

/// Flattened `bands x frames` dB spectrograms drawn around `per_type.len()`
/// random templates.
///
/// A template is one to three tonal notes (a ridge two bands wide, possibly
/// sweeping) over a floor of -65 dB. Each song adds independent Gaussian
/// noise with standard deviation `noise_db` to every cell, clamped to
/// `[-65, 0]`. Labels are template indices.
pub fn spectral_repertoire(
    per_type: &[usize],
    bands: usize,
    frames: usize,
    noise_db: f64,
    rng: &mut impl Rng,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    const FLOOR: f64 = -65.0;
    let templates: Vec<Vec<f64>> = per_type
        .iter()
        .map(|_| {
            let mut cells = vec![FLOOR; bands * frames];
            for _ in 0..rng.random_range(1..=3) {
                let start = rng.random_range(0..frames);
                let len = rng.random_range(frames / 4..=frames / 2).max(1);
                let b0 = rng.random_range(0.0..bands as f64);
                let b1 = (b0 + rng.random_range(-3.0..3.0)).clamp(0.0, bands as f64 - 1.0);
                let level = rng.random_range(-20.0..0.0);
                for f in start..(start + len).min(frames) {
                    let centre = b0 + (b1 - b0) * (f - start) as f64 / len as f64;
                    for b in 0..bands {
                        let d = (b as f64 - centre) / 2.0;
                        let v = level - 30.0 * d * d;
                        let cell = &mut cells[f * bands + b];
                        *cell = cell.max(v.max(FLOOR));
                    }
                }
            }
            cells
        })
        .collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (label, (template, &count)) in templates.iter().zip(per_type).enumerate() {
        for _ in 0..count {
            rows.push(
                template
                    .iter()
                    .map(|c| (c + noise_db * rng.sample::<f64, _>(StandardNormal)).clamp(FLOOR, 0.0))
                    .collect(),
            );
            labels.push(label);
        }
    }
    (rows, labels)
}

/// Song vectors for a multi-year population with persistent individual signatures.
#[derive(Debug, Clone)]
pub struct PopulationSong {
    pub bird: String,
    pub year: i32,
    pub song_type: String,
    pub vector: Vec<f64>,
}

/// Each bird has a signature vector; its song types are small offsets from
/// it, each year drifts slightly, and every song adds per-song noise.
pub fn population_songs(
    birds: usize,
    years: &[i32],
    types_per_bird: usize,
    songs_per_type: usize,
    dims: usize,
    rng: &mut impl Rng,
) -> Vec<PopulationSong> {
    let mut out = Vec::new();
    for b in 0..birds {
        let signature: Vec<f64> = (0..dims).map(|_| rng.sample(StandardNormal)).collect();
        let types: Vec<Vec<f64>> = (0..types_per_bird)
            .map(|_| {
                signature
                    .iter()
                    .map(|s| s + 0.15 * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        for &year in years {
            for (t, centre) in types.iter().enumerate() {
                let drift: Vec<f64> = centre
                    .iter()
                    .map(|c| c + 0.05 * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                for _ in 0..songs_per_type {
                    out.push(PopulationSong {
                        bird: format!("bird{b:02}"),
                        year,
                        song_type: format!("bird{b:02}_t{t}"),
                        vector: drift
                            .iter()
                            .map(|c| c + 0.03 * rng.sample::<f64, _>(StandardNormal))
                            .collect(),
                    });
                }
            }
        }
    }
    out
}

/// Construction truth for one written song.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSong {
    pub id: String,
    pub individual: String,
    pub year: i32,
    pub song_type: usize,
    /// `[start, end)` sample ranges of each unit.
    pub boundaries: Vec<(usize, usize)>,
}

/// Writes `birds x types x songs_per_type` annotated songs into `raw_data`,
/// alternating recordings between `years`.
pub fn write_corpus(
    dirs: &ProjectDirs,
    birds: usize,
    types_per_bird: usize,
    songs_per_type: usize,
    years: &[i32],
    sample_rate_hz: u32,
    seed: u64,
) -> Result<Vec<CorpusSong>> {
    let mut rng = rng(seed);
    let shape = SongShape::default();
    let mut written = Vec::new();
    for b in 0..birds {
        let bird = format!("B{b:02}");
        let bird_dir = dirs.raw_data.join(&bird);
        fs::create_dir_all(&bird_dir).map_err(|e| Error::io(&bird_dir, e))?;
        for t in 0..types_per_bird {
            let units = rng.random_range(3..7);
            let template = random_song(units, &shape, &mut rng);
            for s in 0..songs_per_type {
                let year = years[s % years.len()];
                let song = render(&jitter(&template, &mut rng), sample_rate_hz, 30.0, &mut rng);
                let id = format!("{bird}_{year}_t{t}_{s:02}");
                write_song(&bird_dir, &id, &bird, year, t, sample_rate_hz, &song.samples)?;
                written.push(CorpusSong {
                    id,
                    individual: bird.clone(),
                    year,
                    song_type: t,
                    boundaries: song.boundaries,
                });
            }
        }
    }
    Ok(written)
}

fn write_song(
    dir: &Path,
    id: &str,
    bird: &str,
    year: i32,
    song_type: usize,
    sr: u32,
    samples: &[f32],
) -> Result<()> {
    let audio = Audio {
        sample_rate_hz: sr,
        samples: samples.to_vec(),
    };
    write_wav(&dir.join(format!("{id}.wav")), &audio)?;
    let meta = json!({
        "ID": id,
        "individual": bird,
        "datetime": format!("{year}-04-15T05:30:00Z"),
        "sample_rate": sr,
        "length_s": audio.duration_s(),
        "song_type": format!("t{song_type}"),
    });
    let path = dir.join(format!("{id}.json"));
    fs::write(&path, serde_json::to_string_pretty(&meta).expect("json")).map_err(|e| Error::io(&path, e))
}

/// The bundled 20-song sample: two birds, two song types each, two years.
pub fn write_sample_corpus(dirs: &ProjectDirs, seed: u64) -> Result<Vec<CorpusSong>> {
    write_corpus(dirs, 2, 2, 5, &[2020, 2021], 22_050, seed)
}
