use vocalis::dataset::kspec::Matrix;

/// Viridis sampled at nine evenly spaced points.
const VIRIDIS: [[f32; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [71.0, 44.0, 122.0],
    [59.0, 81.0, 139.0],
    [44.0, 113.0, 142.0],
    [33.0, 144.0, 141.0],
    [39.0, 173.0, 129.0],
    [92.0, 200.0, 99.0],
    [170.0, 220.0, 50.0],
    [253.0, 231.0, 37.0],
];

/// Frame upscaling factor of rendered images.
pub const UPSCALE: usize = 2;

pub fn colour(t: f32) -> [u8; 3] {
    let x = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f32;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - i as f32;
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = (VIRIDIS[i][c] + f * (VIRIDIS[i + 1][c] - VIRIDIS[i][c])).round() as u8;
    }
    out
}

/// RGB PNG of a `bands x frames` dB spectrogram: lowest band at the bottom,
/// `floor_db..0` mapped onto the colour map, each frame `UPSCALE` pixels wide.
pub fn spectrogram_png(m: &Matrix, floor_db: f32) -> Vec<u8> {
    let (h, w) = (m.rows.max(1), (m.cols * UPSCALE).max(1));
    let mut pixels = vec![0u8; h * w * 3];
    for y in 0..m.rows {
        let band = m.rows - 1 - y;
        for x in 0..m.cols * UPSCALE {
            let v = m.values[band * m.cols + x / UPSCALE];
            let rgb = colour((v - floor_db) / -floor_db);
            pixels[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&rgb);
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("in-memory PNG header");
        writer.write_image_data(&pixels).expect("in-memory PNG data");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colour_ends() {
        assert_eq!(colour(0.0), [68, 1, 84]);
        assert_eq!(colour(1.0), [253, 231, 37]);
        assert_eq!(colour(2.0), [253, 231, 37]);
    }

    #[test]
    fn png_size_and_orientation() {
        // band 0 loud, band 1 at the floor
        let m = Matrix::new(2, 3, vec![0.0, 0.0, 0.0, -60.0, -60.0, -60.0]).unwrap();
        let bytes = spectrogram_png(&m, -60.0);
        let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (6, 2));
        assert_eq!(&buf[0..3], &[68, 1, 84]);
        assert_eq!(&buf[18..21], &[253, 231, 37]);
    }
}
