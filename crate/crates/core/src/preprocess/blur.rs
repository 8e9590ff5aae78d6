use super::image::{ImageBuffer, Pixels};
use crate::error::{Error, Result};

/// Normalized 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(taps)
}

/// Maps any integer offset into `0..n` by mirroring with the edge sample
/// repeated (`... c b a | a b c ... | c b a ...`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m >= n { 2 * n - 1 - m } else { m }) as usize
}

/// Separable Gaussian blur applied per channel with reflected borders.
///
/// Accumulates in `f64`; 8-bit images are rounded back to 8 bits and float
/// images are cast back to `f32`.
pub fn apply_blur(image: &ImageBuffer, sigma: f64) -> Result<ImageBuffer> {
    let taps = gaussian_kernel(sigma)?;
    let radius = (taps.len() / 2) as isize;
    let (w, h) = (image.width() as usize, image.height() as usize);
    let src: Vec<f64> = match image.pixels() {
        Pixels::U8(v) => v.iter().map(|&b| f64::from(b)).collect(),
        Pixels::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
    };

    let mut horiz = vec![0.0f64; src.len()];
    for y in 0..h {
        let row = &src[y * w * 3..(y + 1) * w * 3];
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for (k, t) in taps.iter().enumerate() {
                let sx = reflect_index(x as isize + k as isize - radius, w);
                for c in 0..3 {
                    acc[c] += t * row[sx * 3 + c];
                }
            }
            horiz[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&acc);
        }
    }

    let mut out = vec![0.0f64; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for (k, t) in taps.iter().enumerate() {
                let sy = reflect_index(y as isize + k as isize - radius, h);
                for c in 0..3 {
                    acc[c] += t * horiz[(sy * w + x) * 3 + c];
                }
            }
            out[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&acc);
        }
    }

    let pixels = match image.pixels() {
        Pixels::U8(_) => Pixels::U8(
            out.iter()
                .map(|v| v.round().clamp(0.0, 255.0) as u8)
                .collect(),
        ),
        Pixels::F32(_) => Pixels::F32(out.iter().map(|&v| v as f32).collect()),
    };
    ImageBuffer::new(image.width(), image.height(), pixels)
}
