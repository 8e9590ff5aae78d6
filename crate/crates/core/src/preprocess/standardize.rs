use image::imageops::{self, FilterType};
use image::{ImageBuffer as RawImage, Rgb};

use super::ImageBuffer;
use crate::error::Result;
use crate::store::{Interpolation, PreprocessRecord};

/// A standardized `size x size x 3` tensor in HWC order.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub size: u32,
    pub data: Vec<f32>,
}

/// Resizes the shorter side to `rec.input_size`, center-crops a square and
/// applies per-channel `(x - mean) / std`.
pub fn standardize(image: &ImageBuffer, rec: &PreprocessRecord) -> Result<Standardized> {
    rec.validate()?;
    let size = rec.input_size;
    let (w, h) = (image.width(), image.height());
    let (rw, rh) = resized_dims(w, h, size);

    let mut raw: RawImage<Rgb<f32>, Vec<f32>> =
        RawImage::from_raw(w, h, image.to_f32()).expect("length checked by ImageBuffer");
    if (rw, rh) != (w, h) {
        let filter = match rec.interpolation {
            Interpolation::Bicubic => FilterType::CatmullRom,
            Interpolation::Bilinear => FilterType::Triangle,
        };
        raw = imageops::resize(&raw, rw, rh, filter);
    }

    let left = (rw - size) / 2;
    let top = (rh - size) / 2;
    let src = raw.as_raw();
    let mut data = Vec::with_capacity((size * size * 3) as usize);
    for y in top..top + size {
        let start = ((y * rw + left) * 3) as usize;
        for px in src[start..start + (size * 3) as usize].chunks_exact(3) {
            for ((&v, m), s) in px.iter().zip(rec.channel_mean).zip(rec.channel_std) {
                data.push((v - m) / s);
            }
        }
    }
    Ok(Standardized { size, data })
}

/// Dimensions after scaling the shorter side to `target`, keeping aspect.
pub fn resized_dims(w: u32, h: u32, target: u32) -> (u32, u32) {
    let scale = |long: u32, short: u32| {
        let v = (f64::from(long) * f64::from(target) / f64::from(short)).round() as u32;
        v.max(target)
    };
    if w <= h {
        (target, scale(h, w))
    } else {
        (scale(w, h), target)
    }
}
