use vocalis::Parameters;

pub fn sine(freq: f64, seconds: f64, sr: u32) -> Vec<f32> {
    let n = (seconds * f64::from(sr)) as usize;
    (0..n)
        .map(|i| (std::f64::consts::TAU * freq * i as f64 / f64::from(sr)).sin() as f32)
        .collect()
}

/// Mel filters rebuilt from first principles: HTK mel, triangles on the DFT
/// bin grid between `lo` and `hi`.
pub fn oracle_filters(p: &Parameters) -> (Vec<Vec<f64>>, Vec<(f64, f64)>) {
    let mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let (lo, hi) = (mel(p.lowcut_hz), mel(p.highcut_hz));
    let n = p.num_mel_bands;
    let edges: Vec<f64> = (0..n + 2).map(|i| hz(lo + (hi - lo) * i as f64 / (n + 1) as f64)).collect();
    let bins = p.fft_size / 2 + 1;
    let bin_hz = f64::from(p.sample_rate_hz) / p.fft_size as f64;
    let mut filters = Vec::new();
    let mut spans = Vec::new();
    for b in 0..n {
        let (l, c, u) = (edges[b], edges[b + 1], edges[b + 2]);
        filters.push(
            (0..bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= l || f >= u {
                        0.0
                    } else if f <= c {
                        (f - l) / (c - l)
                    } else {
                        (u - f) / (u - c)
                    }
                })
                .collect(),
        );
        spans.push((l, u));
    }
    (filters, spans)
}

/// Per-frame mel magnitudes from a direct O(N^2) DFT.
pub fn oracle_mel_frames(audio: &[f32], p: &Parameters) -> Vec<Vec<f64>> {
    let (filters, _) = oracle_filters(p);
    let w = p.window_length;
    let n_fft = p.fft_size;
    let frames = 1 + (audio.len() - w) / p.hop_length;
    (0..frames)
        .map(|t| {
            let frame: Vec<f64> = (0..w)
                .map(|i| {
                    let hann = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / w as f64).cos();
                    f64::from(audio[t * p.hop_length + i]) * hann
                })
                .collect();
            let mags: Vec<f64> = (0..=n_fft / 2)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (i, x) in frame.iter().enumerate() {
                        let a = -std::f64::consts::TAU * (k * i) as f64 / n_fft as f64;
                        re += x * a.cos();
                        im += x * a.sin();
                    }
                    re.hypot(im)
                })
                .collect();
            filters.iter().map(|f| f.iter().zip(&mags).map(|(w, m)| w * m).sum()).collect()
        })
        .collect()
}

pub fn argmax(v: impl IntoIterator<Item = f64>) -> usize {
    v.into_iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, x)| if x > best.1 { (i, x) } else { best })
        .0
}
