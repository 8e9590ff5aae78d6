use std::path::Path;

use crate::error::{Error, Result};

/// Interleaved RGB pixels, either 8-bit or float in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Pixels {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

/// An RGB image with `width * height * 3` interleaved samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    pixels: Pixels,
}

impl ImageBuffer {
    pub fn from_u8(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        Self::new(width, height, Pixels::U8(data))
    }

    pub fn from_f32(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        Self::new(width, height, Pixels::F32(data))
    }

    pub fn new(width: u32, height: u32, pixels: Pixels) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input(format!("zero-area image {width}x{height}")));
        }
        let len = match &pixels {
            Pixels::U8(v) => v.len(),
            Pixels::F32(v) => v.len(),
        };
        let expected = width as usize * height as usize * 3;
        if len != expected {
            return Err(Error::Dimension {
                expected,
                found: len,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &Pixels {
        &self.pixels
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.pixels {
            Pixels::U8(v) => Some(v),
            Pixels::F32(_) => None,
        }
    }

    /// Samples as floats in `[0, 1]`.
    pub fn to_f32(&self) -> Vec<f32> {
        match &self.pixels {
            Pixels::U8(v) => v.iter().map(|&b| f32::from(b) / 255.0).collect(),
            Pixels::F32(v) => v.clone(),
        }
    }

    /// Quantizes to 8 bits (round half away from zero, clamped).
    pub fn to_u8(&self) -> ImageBuffer {
        let data = match &self.pixels {
            Pixels::U8(v) => v.clone(),
            Pixels::F32(v) => v
                .iter()
                .map(|&x| (x * 255.0).round().clamp(0.0, 255.0) as u8)
                .collect(),
        };
        ImageBuffer {
            width: self.width,
            height: self.height,
            pixels: Pixels::U8(data),
        }
    }

    /// Decodes any supported format (PNG, JPEG) to 8-bit RGB.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        let img = image::load_from_memory(&bytes)
            .map_err(|e| Error::Codec(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        Self::from_u8(w, h, img.into_raw())
    }

    /// Writes an 8-bit PNG (float images are quantized first).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let quantized = self.to_u8();
        let data = quantized.as_u8().expect("quantized").to_vec();
        let img = image::RgbImage::from_raw(self.width, self.height, data).expect("length checked");
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Codec(format!("{}: {e}", path.display())))
    }
}
