//! Amplitude-threshold unit segmentation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::signal::spectrogram::Spectrogram;

/// Edge level on the band-power envelope, relative to the plateau next to
/// the edge: half power, where a symmetric analysis window is centred on the
/// true boundary of a steady sound.
pub const EDGE_LEVEL_DB: f32 = -3.010_3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitFlags {
    pub exceeds_max_duration: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UnitSegmentation {
    pub onsets_s: Vec<f64>,
    pub offsets_s: Vec<f64>,
    pub unit_durations_s: Vec<f64>,
    pub silence_durations_s: Vec<f64>,
    pub flags: Vec<UnitFlags>,
}

impl UnitSegmentation {
    pub fn len(&self) -> usize {
        self.onsets_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.onsets_s.is_empty()
    }

    /// Checks the structural invariants and the duration bounds from `p`.
    pub fn check_invariants(&self, p: &Parameters) -> Result<()> {
        let n = self.onsets_s.len();
        let fail = |msg: String| Err(Error::Validation(msg));
        if self.offsets_s.len() != n || self.unit_durations_s.len() != n || self.flags.len() != n {
            return fail("per-unit vectors differ in length".into());
        }
        if self.silence_durations_s.len() != n.saturating_sub(1) {
            return fail("silence count must be one less than unit count".into());
        }
        for i in 0..n {
            let (on, off) = (self.onsets_s[i], self.offsets_s[i]);
            if !(off > on) {
                return fail(format!("unit {i}: offset {off} <= onset {on}"));
            }
            if self.unit_durations_s[i] != off - on {
                return fail(format!("unit {i}: duration disagrees with bounds"));
            }
            if self.unit_durations_s[i] < p.min_unit_duration_s {
                return fail(format!("unit {i}: shorter than min_unit_duration_s"));
            }
            if i + 1 < n {
                let next = self.onsets_s[i + 1];
                if !(next > on) || next < off {
                    return fail(format!("unit {}: overlaps or precedes unit {i}", i + 1));
                }
                if self.silence_durations_s[i] != next - off {
                    return fail(format!("gap {i}: duration disagrees with bounds"));
                }
                if self.silence_durations_s[i] < p.min_silence_duration_s {
                    return fail(format!("gap {i}: shorter than min_silence_duration_s"));
                }
            }
        }
        Ok(())
    }
}

/// Per-frame maximum over mel bands.
pub fn amplitude_envelope(spec: &Spectrogram) -> Vec<f32> {
    let mut env = vec![f32::NEG_INFINITY; spec.cols];
    for band in 0..spec.rows {
        for (e, &v) in env.iter_mut().zip(spec.row(band)) {
            *e = e.max(v);
        }
    }
    env
}

/// Total band power per frame in dB: `10 log10(sum_b 10^(v_b / 10))`.
pub fn band_power_envelope(spec: &Spectrogram) -> Vec<f32> {
    let mut acc = vec![0f64; spec.cols];
    for band in 0..spec.rows {
        for (a, &v) in acc.iter_mut().zip(spec.row(band)) {
            *a += 10f64.powf(f64::from(v) / 10.0);
        }
    }
    acc.into_iter().map(|a| (10.0 * a.log10()) as f32).collect()
}

/// Frames whose envelope reaches `threshold_db`.
pub fn active_frames(envelope: &[f32], threshold_db: f64) -> Vec<bool> {
    envelope
        .iter()
        .map(|&e| f64::from(e) >= threshold_db)
        .collect()
}

/// Maximal runs of active frames as half-open `[start, end)` ranges.
fn runs(active: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (t, &a) in active.iter().enumerate() {
        match (a, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                out.push((s, t));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, active.len()));
    }
    out
}

/// Edge levels of a unit `[start, end)`: [`EDGE_LEVEL_DB`] below the loudest
/// frame within `reach` frames of each edge.
fn edge_levels(envelope: &[f32], (start, end): (usize, usize), reach: usize) -> (f32, f32) {
    let max = |r: &[f32]| r.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let on = max(&envelope[start..end.min(start + reach)]);
    let off = max(&envelope[end.saturating_sub(reach).max(start)..end]);
    (on + EDGE_LEVEL_DB, off + EDGE_LEVEL_DB)
}

/// Moves a unit's outer edges inward to the first frame at or above `on`
/// and the last frame at or above `off`.
fn refine_edges(envelope: &[f32], (start, end): (usize, usize), (on, off): (f32, f32)) -> (usize, usize) {
    let first = (start..end).find(|&t| envelope[t] >= on).unwrap_or(start);
    let last = (first..end).rev().find(|&t| envelope[t] >= off).unwrap_or(first);
    (first, last + 1)
}

/// Converts frame positions to seconds. A frame covers one hop centred on its
/// frame time; edges are placed where the envelope crosses the edge level,
/// interpolated linearly (in dB) between neighbouring frames.
struct FrameClock<'a> {
    spec: &'a Spectrogram,
    envelope: &'a [f32],
    hop_s: f64,
}

impl FrameClock<'_> {
    fn grid_onset(&self, frame: usize) -> f64 {
        self.spec.frame_times[frame] - self.hop_s / 2.0
    }

    fn grid_offset(&self, end: usize) -> f64 {
        self.spec.frame_times[end - 1] + self.hop_s / 2.0
    }

    fn crossing(&self, inside: usize, outside: usize, level: f32) -> f64 {
        let (a, b) = (self.envelope[inside], self.envelope[outside]);
        let frac = if a > b {
            (f64::from(a - level) / f64::from(a - b)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        let t_in = self.spec.frame_times[inside];
        let t_out = self.spec.frame_times[outside];
        t_in + (t_out - t_in) * frac
    }

    /// Onset and offset in seconds of the refined unit `[first, end)`.
    fn edges(&self, (first, end): (usize, usize), (on, off): (f32, f32)) -> (f64, f64) {
        let onset = if first == 0 {
            self.grid_onset(first)
        } else {
            self.crossing(first, first - 1, on)
        };
        let last = end - 1;
        let offset = if end >= self.spec.cols {
            self.grid_offset(end)
        } else {
            self.crossing(last, end, off)
        };
        (onset, offset)
    }
}

/// Finds units by thresholding the amplitude envelope:
///
/// 1. frames with envelope `>= silence_threshold_db` are active;
/// 2. maximal runs of active frames become candidate units;
/// 3. candidates separated by less than `min_silence_duration_s` are merged;
/// 4. each unit's outer edges are refined to the half-power crossing of the
///    band-power envelope;
/// 5. units shorter than `min_unit_duration_s` are dropped;
/// 6. units longer than `max_unit_duration_s` are flagged, never split.
///
/// Each frame stands for one hop centred on its frame time. A spectrogram
/// with no dynamic range (e.g. digital silence) has no units.
pub fn segment_into_units(spec: &Spectrogram, p: &Parameters) -> UnitSegmentation {
    // no dynamic range: nothing stands out from the background
    if spec.cols == 0 || spec.max_value() == spec.min_value() {
        return UnitSegmentation::default();
    }
    let envelope = amplitude_envelope(spec);
    let active = active_frames(&envelope, p.silence_threshold_db);
    let power = band_power_envelope(spec);
    let clock = FrameClock {
        spec,
        envelope: &power,
        hop_s: spec.hop_length as f64 / f64::from(spec.sample_rate_hz),
    };

    let mut merged: Vec<(usize, usize)> = Vec::new();
    for run in runs(&active) {
        match merged.last_mut() {
            Some(prev)
                if clock.grid_onset(run.0) - clock.grid_offset(prev.1)
                    < p.min_silence_duration_s =>
            {
                prev.1 = run.1;
            }
            _ => merged.push(run),
        }
    }

    let reach = spec.window_length.div_ceil(spec.hop_length);
    let mut seg = UnitSegmentation::default();
    for unit in merged {
        let levels = edge_levels(&power, unit, reach);
        let refined = refine_edges(&power, unit, levels);
        let (onset, offset) = clock.edges(refined, levels);
        let duration = offset - onset;
        if duration < p.min_unit_duration_s {
            continue;
        }
        if let Some(&prev_off) = seg.offsets_s.last() {
            seg.silence_durations_s.push(onset - prev_off);
        }
        seg.onsets_s.push(onset);
        seg.offsets_s.push(offset);
        seg.unit_durations_s.push(duration);
        seg.flags.push(UnitFlags {
            exceeds_max_duration: duration > p.max_unit_duration_s,
        });
    }
    seg
}

/// Frame range `[start, end)` covered by unit `i`.
pub fn unit_frame_range(spec: &Spectrogram, seg: &UnitSegmentation, i: usize) -> (isize, isize) {
    let sr = f64::from(spec.sample_rate_hz);
    let hop_s = spec.hop_length as f64 / sr;
    let lead = spec.window_length as f64 / (2.0 * sr) - hop_s / 2.0;
    let to_frame = |t: f64| ((t - lead) / hop_s).round() as isize;
    (to_frame(seg.onsets_s[i]), to_frame(seg.offsets_s[i]))
}

/// Column slices `[onset_frame, offset_frame)` for every unit.
pub fn extract_unit_spectrograms(
    spec: &Spectrogram,
    seg: &UnitSegmentation,
) -> Result<Vec<Spectrogram>> {
    (0..seg.len())
        .map(|i| {
            let (start, end) = unit_frame_range(spec, seg, i);
            if start < 0 || end as usize > spec.cols || start >= end {
                return Err(Error::Range(format!(
                    "unit {i} spans frames [{start}, {end}) outside 0..{}",
                    spec.cols
                )));
            }
            let (start, end) = (start as usize, end as usize);
            let width = end - start;
            let mut values = Vec::with_capacity(spec.rows * width);
            for band in 0..spec.rows {
                values.extend_from_slice(&spec.row(band)[start..end]);
            }
            Ok(Spectrogram {
                rows: spec.rows,
                cols: width,
                values,
                frame_times: spec.frame_times[start..end].to_vec(),
                ..spec.clone_meta()
            })
        })
        .collect()
}

impl Spectrogram {
    fn clone_meta(&self) -> Spectrogram {
        Spectrogram {
            rows: self.rows,
            cols: 0,
            values: Vec::new(),
            sample_rate_hz: self.sample_rate_hz,
            hop_length: self.hop_length,
            window_length: self.window_length,
            top_db: self.top_db,
            frame_times: Vec::new(),
            band_centres_hz: self.band_centres_hz.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> Parameters {
        Parameters {
            num_mel_bands: 1,
            ..Default::default()
        }
    }

    /// One-band spectrogram with the given envelope.
    fn spec_with_env(env: &[f32]) -> Spectrogram {
        Spectrogram::from_matrix(1, env.len(), env.to_vec(), &p(), 0).unwrap()
    }

    fn hop_frames(seconds: f64) -> usize {
        (seconds / p().hop_seconds()).ceil() as usize
    }

    #[test]
    fn silence_gives_no_units() {
        let env: Vec<f32> = (0..200).map(|i| if i % 2 == 0 { -40.0 } else { -45.0 }).collect();
        let s = spec_with_env(&env);
        assert!(segment_into_units(&s, &p()).is_empty());
    }

    #[test]
    fn single_block() {
        let mut env = vec![-60.0; 100];
        env[20..50].fill(0.0);
        let s = spec_with_env(&env);
        let seg = segment_into_units(&s, &p());
        assert_eq!(seg.len(), 1);
        let hop = p().hop_seconds();
        // edges sit 3.0103 / 60 of a frame outside the first and last loud frames
        let expected = (29.0 + 2.0 * 3.0103 / 60.0) * hop;
        assert!((seg.unit_durations_s[0] - expected).abs() < 1e-9);
        seg.check_invariants(&p()).unwrap();
    }

    #[test]
    fn short_gap_merged() {
        let mut env = vec![-60.0; 200];
        env[10..40].fill(0.0);
        env[41..70].fill(0.0);
        let seg = segment_into_units(&spec_with_env(&env), &p());
        assert_eq!(seg.len(), 1);
    }

    #[test]
    fn long_gap_kept() {
        let gap = hop_frames(p().min_silence_duration_s) + 1;
        let mut env = vec![-60.0; 200];
        env[10..40].fill(0.0);
        env[40 + gap..80 + gap].fill(0.0);
        let seg = segment_into_units(&spec_with_env(&env), &p());
        assert_eq!(seg.len(), 2);
        assert!(seg.silence_durations_s[0] >= p().min_silence_duration_s);
        seg.check_invariants(&p()).unwrap();
    }

    #[test]
    fn blips_dropped() {
        let mut env = vec![-60.0; 100];
        env[50] = 0.0;
        assert!(segment_into_units(&spec_with_env(&env), &p()).is_empty());
    }

    #[test]
    fn long_units_flagged_not_split() {
        let long = hop_frames(p().max_unit_duration_s) + 5;
        let mut env = vec![-60.0; long + 40];
        env[20..20 + long].fill(0.0);
        let seg = segment_into_units(&spec_with_env(&env), &p());
        assert_eq!(seg.len(), 1);
        assert!(seg.flags[0].exceeds_max_duration);
    }

    #[test]
    fn edges_refined_to_half_amplitude() {
        let mut env = vec![-60.0; 60];
        env[10..40].fill(0.0);
        env[9] = -20.0;
        env[40] = -12.0;
        let s = spec_with_env(&env);
        let seg = segment_into_units(&s, &p());
        let (a, b) = unit_frame_range(&s, &seg, 0);
        assert_eq!((a, b), (10, 40));
    }

    #[test]
    fn envelope_is_column_max() {
        let s = Spectrogram::from_matrix(
            2,
            3,
            vec![-1.0, -5.0, -9.0, -4.0, -2.0, -30.0],
            &Parameters {
                num_mel_bands: 2,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        assert_eq!(amplitude_envelope(&s), vec![-1.0, -2.0, -9.0]);
    }

    #[test]
    fn constant_envelope() {
        let s = spec_with_env(&[-7.0; 9]);
        assert_eq!(amplitude_envelope(&s), vec![-7.0; 9]);
    }

    #[test]
    fn slices_match_frames() {
        let mut env = vec![-60.0; 100];
        env[5..25].fill(0.0);
        env[50..90].fill(0.0);
        let s = spec_with_env(&env);
        let seg = segment_into_units(&s, &p());
        let slices = extract_unit_spectrograms(&s, &seg).unwrap();
        let widths: Vec<_> = slices.iter().map(|x| x.cols).collect();
        assert_eq!(widths, vec![20, 40]);
        assert_eq!(slices[1].frame_times[0], s.frame_times[50]);
    }

    /// Band 0 loud for every frame, band 1 at the floor.
    fn loud_everywhere(cols: usize) -> Spectrogram {
        let mut values = vec![0.0; cols];
        values.extend(vec![-65.0; cols]);
        let q = Parameters {
            num_mel_bands: 2,
            ..Default::default()
        };
        Spectrogram::from_matrix(2, cols, values, &q, 0).unwrap()
    }

    #[test]
    fn constant_spectrogram_has_no_units() {
        assert!(segment_into_units(&spec_with_env(&[0.0; 30]), &p()).is_empty());
    }

    #[test]
    fn whole_span_slice_is_input() {
        let s = loud_everywhere(30);
        let seg = segment_into_units(&s, &p());
        let slices = extract_unit_spectrograms(&s, &seg).unwrap();
        assert_eq!(slices.len(), 1);
        assert_eq!(slices[0], s);
    }

    #[test]
    fn out_of_range_unit() {
        let s = loud_everywhere(30);
        let mut seg = segment_into_units(&s, &p());
        seg.offsets_s[0] += 1.0;
        assert!(matches!(extract_unit_spectrograms(&s, &seg), Err(Error::Range(_))));
        assert!(extract_unit_spectrograms(&s, &UnitSegmentation::default())
            .unwrap()
            .is_empty());
    }
}
