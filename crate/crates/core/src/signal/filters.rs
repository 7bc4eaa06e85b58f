use crate::error::{Error, Result};
use crate::signal::spectrogram::{Spectrogram, AMPLITUDE_FLOOR};

/// Floors every mel band whose centre frequency lies outside `[lowcut, highcut]`.
pub fn bandpass(spec: &Spectrogram, lowcut_hz: f64, highcut_hz: f64) -> Result<Spectrogram> {
    let nyquist = f64::from(spec.sample_rate_hz) / 2.0;
    if !(lowcut_hz < highcut_hz) {
        return Err(Error::Validation(format!(
            "inverted band: lowcut {lowcut_hz} Hz >= highcut {highcut_hz} Hz"
        )));
    }
    if lowcut_hz < 0.0 || highcut_hz > nyquist {
        return Err(Error::Validation(format!(
            "band [{lowcut_hz}, {highcut_hz}] Hz outside [0, {nyquist}] Hz"
        )));
    }
    let mut out = spec.clone();
    let floor = spec.floor_db();
    for (band, &centre) in spec.band_centres_hz.iter().enumerate() {
        if centre < lowcut_hz || centre > highcut_hz {
            out.values[band * spec.cols..(band + 1) * spec.cols].fill(floor);
        }
    }
    Ok(out)
}

/// Subtracts a scaled running mean of the preceding `history` frames from
/// each frame, per band, in linear magnitude:
///
/// `out[f, t] = max(m[f, t] - strength * mean(m[f, t-history..t]), 0)`
///
/// The first `history` frames pass through. The result is converted back to
/// dB and re-normalised.
pub fn dereverberate(spec: &Spectrogram, strength: f64, history: usize) -> Spectrogram {
    if strength == 0.0 || history == 0 || spec.cols <= history {
        return spec.clone();
    }
    let mut out = spec.clone();
    let floor = f64::from(AMPLITUDE_FLOOR);
    let mut lin = vec![0f64; spec.cols];
    for band in 0..spec.rows {
        for (l, &db) in lin.iter_mut().zip(spec.row(band)) {
            *l = 10f64.powf(f64::from(db) / 20.0);
        }
        let mut window_sum: f64 = lin[..history].iter().sum();
        let row = &mut out.values[band * spec.cols..(band + 1) * spec.cols];
        for t in history..spec.cols {
            let mean = window_sum / history as f64;
            let v = (lin[t] - strength * mean).max(0.0);
            row[t] = (20.0 * v.max(floor).log10()) as f32;
            window_sum += lin[t] - lin[t - history];
        }
    }
    out.normalise();
    out
}
