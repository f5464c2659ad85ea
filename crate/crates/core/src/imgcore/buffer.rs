use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};

/// A normalized raster with `f64` samples stored row-major, channel-interleaved
/// (`index = (y * width + x) * channels + c`).
///
/// Samples are nominally in `[0, 1]`, but the buffer does not enforce it:
/// intermediate results (residuals, variance maps, gradients) live in the
/// same type. Operations that clamp say so.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    samples: Vec<f64>,
}

/// Fixed luma weights (ITU-R BT.601).
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize, samples: Vec<f64>) -> Result<Self> {
        check_geometry(height, width, channels)?;
        if samples.len() != height * width * channels {
            return Err(Error::Geometry(format!(
                "{} samples for {height}x{width}x{channels}",
                samples.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            samples,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        check_geometry(height, width, channels)?;
        Ok(Self {
            height,
            width,
            channels,
            samples: vec![value; height * width * channels],
        })
    }

    /// Builds an image by evaluating `f(y, x, c)` at every sample in row-major order.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_geometry(height, width, channels)?;
        let mut samples = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    samples.push(f(y, x, c));
                }
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            samples,
        })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`
    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    #[inline]
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    #[inline]
    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.samples[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.samples[(y * self.width + x) * self.channels + c] = v;
    }

    /// Samples per row (`width * channels`).
    #[inline]
    pub fn row_len(&self) -> usize {
        self.width * self.channels
    }

    pub fn same_dims(&self, other: &ImageBuffer) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn ensure_same_dims(&self, other: &ImageBuffer) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::DimMismatch {
                left: self.dims(),
                right: other.dims(),
            })
        }
    }

    /// Same geometry, new samples.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> ImageBuffer {
        debug_assert_eq!(samples.len(), self.samples.len());
        ImageBuffer {
            height: self.height,
            width: self.width,
            channels: self.channels,
            samples,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageBuffer {
        self.with_samples(self.samples.iter().map(|&v| f(v)).collect())
    }

    /// Clamps every sample to `[0, 1]` in place.
    pub fn clamp_unit(&mut self) {
        for v in &mut self.samples {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn clamped(mut self) -> ImageBuffer {
        self.clamp_unit();
        self
    }

    /// One channel as a 1-channel image.
    pub fn channel(&self, c: usize) -> ImageBuffer {
        assert!(c < self.channels);
        let samples = self
            .samples
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        ImageBuffer {
            height: self.height,
            width: self.width,
            channels: 1,
            samples,
        }
    }

    /// Copies out the `h`x`w` window whose top-left corner is `(y, x)`.
    pub fn crop(&self, y: usize, x: usize, h: usize, w: usize) -> Result<ImageBuffer> {
        if h == 0 || w == 0 || y + h > self.height || x + w > self.width {
            return Err(Error::Geometry(format!(
                "crop {h}x{w} at ({y},{x}) outside {}x{}",
                self.height, self.width
            )));
        }
        let c = self.channels;
        let mut samples = Vec::with_capacity(h * w * c);
        for row in y..y + h {
            let start = (row * self.width + x) * c;
            samples.extend_from_slice(&self.samples[start..start + w * c]);
        }
        ImageBuffer::new(h, w, c, samples)
    }

    pub fn transpose(&self) -> ImageBuffer {
        let mut out = ImageBuffer {
            height: self.width,
            width: self.height,
            channels: self.channels,
            samples: vec![0.0; self.samples.len()],
        };
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out.set(x, y, c, self.get(y, x, c));
                }
            }
        }
        out
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Population standard deviation over all samples.
    pub fn std(&self) -> f64 {
        population_std(&self.samples)
    }

    pub fn max_abs_diff(&self, other: &ImageBuffer) -> Result<f64> {
        self.ensure_same_dims(other)?;
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    // 8-bit conversion: value / 255 in, round(value * 255) out.

    pub fn from_dynamic(img: &DynamicImage) -> ImageBuffer {
        let (samples, w, h, c) = match img {
            DynamicImage::ImageLuma8(g) => (g.as_raw().clone(), g.width(), g.height(), 1),
            DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) => {
                let g = img.to_luma8();
                (g.as_raw().clone(), g.width(), g.height(), 1)
            }
            _ => {
                let rgb = img.to_rgb8();
                (rgb.as_raw().clone(), rgb.width(), rgb.height(), 3)
            }
        };
        ImageBuffer {
            height: h as usize,
            width: w as usize,
            channels: c,
            samples: samples.iter().map(|&v| f64::from(v) / 255.0).collect(),
        }
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.samples.iter().map(|&v| quantize_u8(v)).collect()
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        let raw = self.to_u8();
        match self.channels {
            1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, raw).expect("geometry")),
            _ => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, raw).expect("geometry")),
        }
    }

    /// Reads a PNG or JPEG file.
    pub fn load(path: impl AsRef<Path>) -> Result<ImageBuffer> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Codec {
            path: Some(path.to_path_buf()),
            source,
        })?;
        Ok(ImageBuffer::from_dynamic(&img))
    }

    /// Writes an 8-bit PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_dynamic()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Codec {
                path: Some(path.to_path_buf()),
                source,
            })
    }

    /// Encodes as an 8-bit PNG in memory.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_dynamic()
            .write_to(&mut out, image::ImageFormat::Png)
            .map_err(|source| Error::Codec { path: None, source })?;
        Ok(out.into_inner())
    }
}

#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub(crate) fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

fn check_geometry(height: usize, width: usize, channels: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Geometry(format!("empty image {height}x{width}")));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::Geometry(format!("{channels} channels, expected 1 or 3")));
    }
    Ok(())
}
