//! Spectrograms, band limiting, dereverberation and unit segmentation.

mod filters;
mod segment;
mod spectrogram;

pub use filters::{bandpass, dereverberate};
pub use segment::{
    active_frames, amplitude_envelope, band_power_envelope, extract_unit_spectrograms, segment_into_units,
    unit_frame_range, UnitFlags, UnitSegmentation, EDGE_LEVEL_DB,
};
pub use spectrogram::{
    compute_spectrogram, frame_count, hann, hz_to_mel, mel_to_hz, MelFilterbank, Spectrogram,
    SpectrogramPlan, AMPLITUDE_FLOOR,
};

use crate::error::Result;
use crate::params::Parameters;

/// Spectrogram, band-pass and (optional) dereverberation, as used by the pipeline.
pub fn prepare_spectrogram(plan: &SpectrogramPlan, audio: &[f32], p: &Parameters) -> Result<Spectrogram> {
    let spec = plan.compute(audio)?;
    let spec = bandpass(&spec, p.lowcut_hz, p.highcut_hz)?;
    Ok(dereverberate(&spec, p.dereverb_strength, p.dereverb_history_frames))
}
