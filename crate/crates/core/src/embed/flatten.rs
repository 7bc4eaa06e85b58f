use serde::{Deserialize, Serialize};

use crate::dataset::kspec::Matrix;
use crate::error::{Error, Result};
use crate::signal::Spectrogram;

/// Which vocalisation a feature or embedding row belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowOwner {
    pub song_id: String,
    /// `None` for a whole-song row.
    pub unit_index: Option<usize>,
    pub individual_id: String,
    pub year: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub owner: RowOwner,
    pub vector: Vec<f32>,
}

/// A `[band][frame]` matrix view shared by in-memory and on-disk slices.
pub trait BandFrames {
    fn bands(&self) -> usize;
    fn frames(&self) -> usize;
    fn at(&self, band: usize, frame: usize) -> f32;
}

impl BandFrames for Spectrogram {
    fn bands(&self) -> usize {
        self.rows
    }
    fn frames(&self) -> usize {
        self.cols
    }
    fn at(&self, band: usize, frame: usize) -> f32 {
        self.get(band, frame)
    }
}

impl BandFrames for Matrix {
    fn bands(&self) -> usize {
        self.rows
    }
    fn frames(&self) -> usize {
        self.cols
    }
    fn at(&self, band: usize, frame: usize) -> f32 {
        self.values[band * self.cols + frame]
    }
}

/// Right-pads each slice with `floor_db` to `pad_frames` frames and flattens
/// it frame by frame: entry `f * bands + b` is band `b` of frame `f`, so
/// padding always occupies the tail of the vector.
pub fn pad_and_flatten<S: BandFrames>(units: &[S], pad_frames: usize, floor_db: f32) -> Result<Vec<Vec<f32>>> {
    let Some(first) = units.first() else {
        return Ok(Vec::new());
    };
    let bands = first.bands();
    units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            if u.frames() > pad_frames {
                return Err(Error::Range(format!(
                    "unit {i} has {} frames, more than the padding length {pad_frames}",
                    u.frames()
                )));
            }
            if u.bands() != bands {
                return Err(Error::Range(format!(
                    "unit {i} has {} bands, expected {bands}",
                    u.bands()
                )));
            }
            let mut v = Vec::with_capacity(bands * pad_frames);
            for f in 0..u.frames() {
                v.extend((0..bands).map(|b| u.at(b, f)));
            }
            v.resize(bands * pad_frames, floor_db);
            Ok(v)
        })
        .collect()
}
