use jpeg_encoder::{ChromaSubsamplingMethod, ColorType, Encoder, SamplingFactor};

use super::ImageBuffer;
use crate::error::{Error, Result};

/// Baseline JPEG encode at `quality` with 4:2:0 chroma subsampling.
pub fn encode_jpeg(image: &ImageBuffer, quality: u8) -> Result<Vec<u8>> {
    if !(1..=100).contains(&quality) {
        return Err(Error::Parameter(format!(
            "jpeg quality {quality} not in [1, 100]"
        )));
    }
    let data = image
        .as_u8()
        .ok_or_else(|| Error::Input("JPEG perturbation needs an 8-bit image".into()))?;
    let (w, h) = match (u16::try_from(image.width()), u16::try_from(image.height())) {
        (Ok(w), Ok(h)) => (w, h),
        _ => return Err(Error::Parameter("image too large for baseline JPEG".into())),
    };
    let mut out = Vec::new();
    let mut encoder = Encoder::new(&mut out, quality);
    encoder.set_sampling_factor(SamplingFactor::R_4_2_0);
    encoder.set_chroma_subsampling_method(ChromaSubsamplingMethod::Average);
    encoder.set_progressive(false);
    encoder
        .encode(data, w, h, ColorType::Rgb)
        .map_err(|e| Error::Codec(e.to_string()))?;
    Ok(out)
}

pub fn decode_jpeg(bytes: &[u8]) -> Result<ImageBuffer> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Jpeg)
        .map_err(|e| Error::Codec(e.to_string()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    ImageBuffer::from_u8(w, h, img.into_raw())
}

/// JPEG round trip: encode at `quality`, then decode. Dimensions are kept.
pub fn apply_jpeg(image: &ImageBuffer, quality: u8) -> Result<ImageBuffer> {
    decode_jpeg(&encode_jpeg(image, quality)?)
}

/// Peak signal-to-noise ratio over all 8-bit samples, in dB.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    let (Some(x), Some(y)) = (a.as_u8(), b.as_u8()) else {
        return Err(Error::Input("PSNR is defined here for 8-bit images".into()));
    };
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: y.len(),
        });
    }
    let mse = x
        .iter()
        .zip(y)
        .map(|(&p, &q)| (f64::from(p) - f64::from(q)).powi(2))
        .sum::<f64>()
        / x.len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    })
}
