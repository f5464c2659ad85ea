//! The blur -> resize -> noise -> JPEG degradation chain with seeded,
//! profile-bounded parameters.

mod kernel;
mod recipe;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

pub use kernel::{make_blur_kernel, BlurMode};
pub use recipe::{
    sample_recipe, BlurParams, BlurRanges, DegradationRecipe, JpegParams, JpegRanges, NoiseKind,
    NoiseParams, NoiseRanges, ResizeParams, ResizeRanges, SeverityProfile, Span,
};

use crate::error::{Error, Result};
use crate::imgcore::{convolve2d, resize, to_luma, BorderPolicy, ImageBuffer, ResizeFilter};
use crate::par;

/// Smallest side accepted for degraded outputs (one JPEG block).
pub const MIN_OUTPUT_SIDE: usize = 8;

// Keeps the noise stream disjoint from the recipe-sampling stream.
const NOISE_STREAM_SALT: u64 = 0x6e6f_6973_655f_7631;

/// Round-half-up of `dim * scale`.
pub fn scaled_dim(dim: usize, scale: f64) -> usize {
    (dim as f64 * scale + 0.5).floor() as usize
}

/// Applies the full recipe: blur, resize by `recipe.resize.scale`, noise,
/// JPEG, in that order. Output is clamped to `[0, 1]`.
pub fn degrade(hr: &ImageBuffer, recipe: &DegradationRecipe) -> Result<ImageBuffer> {
    recipe.validate()?;
    let th = scaled_dim(hr.height(), recipe.resize.scale);
    let tw = scaled_dim(hr.width(), recipe.resize.scale);
    if th < MIN_OUTPUT_SIDE || tw < MIN_OUTPUT_SIDE {
        return Err(Error::Geometry(format!(
            "degraded output {th}x{tw} below the {MIN_OUTPUT_SIDE}x{MIN_OUTPUT_SIDE} minimum"
        )));
    }
    let blurred = apply_blur(hr, &recipe.blur)?;
    let resized = resize(&blurred, th, tw, recipe.resize.filter)?;
    let mut noisy = add_noise(&resized, &recipe.noise, recipe.seed);
    noisy.clamp_unit();
    if recipe.jpeg.enabled {
        jpeg_round_trip(&noisy, recipe.jpeg.quality)
    } else {
        Ok(noisy)
    }
}

/// [`degrade`] with the resize scale forced to `1 / sr_scale`.
pub fn degrade_to_lr(hr: &ImageBuffer, recipe: &DegradationRecipe, sr_scale: usize) -> Result<ImageBuffer> {
    if sr_scale == 0 || !hr.height().is_multiple_of(sr_scale) || !hr.width().is_multiple_of(sr_scale) {
        return Err(Error::Geometry(format!(
            "{}x{} not divisible by scale {sr_scale}",
            hr.height(),
            hr.width()
        )));
    }
    let mut r = *recipe;
    r.resize.scale = 1.0 / sr_scale as f64;
    degrade(hr, &r)
}

/// Bicubic upsample back to `(target_h, target_w)`, clamped. Used to feed
/// same-size enhancement models.
pub fn upsample_back(lq: &ImageBuffer, target_h: usize, target_w: usize) -> Result<ImageBuffer> {
    if target_h < lq.height() || target_w < lq.width() {
        return Err(Error::Geometry(format!(
            "upsample target {target_h}x{target_w} smaller than {}x{}",
            lq.height(),
            lq.width()
        )));
    }
    resize(lq, target_h, target_w, ResizeFilter::Bicubic)
}

pub fn apply_blur(img: &ImageBuffer, blur: &BlurParams) -> Result<ImageBuffer> {
    if blur.ksize == 1 {
        return Ok(img.clone());
    }
    let k = make_blur_kernel(blur.mode, blur.sigma_x, blur.sigma_y, blur.theta, blur.ksize)?;
    convolve2d(img, &k, BorderPolicy::Replicate)
}

/// Adds seeded noise without clamping. Each row draws from its own ChaCha
/// stream, so the result does not depend on how rows are scheduled.
pub fn add_noise(img: &ImageBuffer, noise: &NoiseParams, seed: u64) -> ImageBuffer {
    let c = img.channels();
    let w = img.width();
    let mut out = img.samples().to_vec();
    match noise.kind {
        NoiseKind::Gaussian => {
            if noise.sigma == 0.0 {
                return img.clone();
            }
            let normal = Normal::new(0.0, noise.sigma).expect("sigma validated");
            par::for_each_row_mut(&mut out, w * c, |y, row| {
                let mut rng = row_rng(seed, y);
                if noise.gray {
                    for px in row.chunks_exact_mut(c) {
                        let n = normal.sample(&mut rng);
                        px.iter_mut().for_each(|v| *v += n);
                    }
                } else {
                    row.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
                }
            });
        }
        NoiseKind::Poisson => {
            let lambda = 255.0 * noise.level;
            let luma = (noise.gray && c > 1).then(|| to_luma(img));
            par::for_each_row_mut(&mut out, w * c, |y, row| {
                let mut rng = row_rng(seed, y);
                if let Some(luma) = &luma {
                    for (x, px) in row.chunks_exact_mut(c).enumerate() {
                        let l = luma.get(y, x, 0);
                        let n = shot(l, lambda, &mut rng) - l;
                        px.iter_mut().for_each(|v| *v += n);
                    }
                } else {
                    row.iter_mut().for_each(|v| *v = shot(*v, lambda, &mut rng));
                }
            });
        }
    }
    img.with_samples(out)
}

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_STREAM_SALT);
    rng.set_stream(row as u64);
    rng
}

fn shot(x: f64, lambda: f64, rng: &mut ChaCha8Rng) -> f64 {
    let mean = x.max(0.0) * lambda;
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) / lambda
}

/// Encodes as baseline JPEG at `quality` and decodes back.
pub fn jpeg_round_trip(img: &ImageBuffer, quality: u8) -> Result<ImageBuffer> {
    use image::codecs::jpeg::JpegEncoder;
    use image::{ExtendedColorType, ImageEncoder};

    let raw = img.to_u8();
    let color = if img.channels() == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    let mut bytes = Vec::new();
    JpegEncoder::new_with_quality(&mut bytes, quality)
        .write_image(&raw, img.width() as u32, img.height() as u32, color)
        .map_err(|source| Error::Codec { path: None, source })?;
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Jpeg)
        .map_err(|source| Error::Codec { path: None, source })?;
    let out = ImageBuffer::from_dynamic(&decoded);
    if out.dims() != img.dims() {
        return Err(Error::Geometry(format!(
            "jpeg round trip changed {:?} into {:?}",
            img.dims(),
            out.dims()
        )));
    }
    Ok(out)
}
