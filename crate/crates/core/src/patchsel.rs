//! Candidate patch proposal, informativeness scoring and group assembly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{laplacian_pyramid, population_std, to_luma, ImageBuffer};
use crate::par;

pub const DEFAULT_PATCH_SIZE: usize = 512;
pub const DEFAULT_MAX_OVERLAP: f64 = 0.5;
pub const DEFAULT_PYRAMID_LEVELS: usize = 3;
/// Number of enhancement models per group.
pub const VARIANTS: usize = 4;

/// Rejection-sampling budget per wanted patch.
const ATTEMPTS_PER_PATCH: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub image_id: String,
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

impl PatchSpec {
    /// Area shared with another square patch, in pixels.
    pub fn overlap_area(&self, other: &PatchSpec) -> usize {
        let ix = (self.x + self.size).min(other.x + other.size).saturating_sub(self.x.max(other.x));
        let iy = (self.y + self.size).min(other.y + other.size).saturating_sub(self.y.max(other.y));
        ix * iy
    }

    pub fn crop(&self, img: &ImageBuffer) -> Result<ImageBuffer> {
        img.crop(self.y, self.x, self.size, self.size)
    }
}

/// True when `candidate` overlaps every accepted patch by strictly less than
/// `max_overlap_fraction` of the patch area.
pub fn overlap_ok(accepted: &[PatchSpec], candidate: &PatchSpec, max_overlap_fraction: f64) -> bool {
    let limit = max_overlap_fraction * (candidate.size * candidate.size) as f64;
    accepted
        .iter()
        .all(|p| (p.overlap_area(candidate) as f64) < limit)
}

/// Greedy rejection sampling of square patches under the overlap constraint.
/// May return fewer than `want`.
pub fn propose_patches(
    image_id: &str,
    height: usize,
    width: usize,
    size: usize,
    max_overlap_fraction: f64,
    want: usize,
    seed: u64,
) -> Result<Vec<PatchSpec>> {
    if size == 0 || height < size || width < size {
        return Err(Error::Geometry(format!(
            "{height}x{width} image smaller than {size}x{size} patch"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted: Vec<PatchSpec> = Vec::with_capacity(want);
    let mut attempts = want.saturating_mul(ATTEMPTS_PER_PATCH);
    while accepted.len() < want && attempts > 0 {
        attempts -= 1;
        let cand = PatchSpec {
            image_id: image_id.to_owned(),
            x: rng.random_range(0..=width - size),
            y: rng.random_range(0..=height - size),
            size,
        };
        if overlap_ok(&accepted, &cand, max_overlap_fraction) {
            accepted.push(cand);
        }
    }
    Ok(accepted)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InformativenessScore {
    /// Std of luminance samples.
    pub std_image: f64,
    /// Std over all band-pass samples of the luminance Laplacian pyramid.
    pub std_highfreq: f64,
}

pub fn informativeness(patch: &ImageBuffer, pyramid_levels: usize) -> Result<InformativenessScore> {
    let luma = to_luma(patch);
    let pyr = laplacian_pyramid(&luma, pyramid_levels)?;
    let bands: Vec<f64> = pyr.band_samples().collect();
    Ok(InformativenessScore {
        std_image: luma.std(),
        std_highfreq: population_std(&bands),
    })
}

/// Mean absolute per-sample difference.
pub fn enhancement_difference(orig: &ImageBuffer, enhanced: &ImageBuffer) -> Result<f64> {
    orig.ensure_same_dims(enhanced)?;
    let sum: f64 = orig
        .samples()
        .iter()
        .zip(enhanced.samples())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / orig.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub min_std_image: f64,
    pub min_std_highfreq: f64,
    pub min_diff: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            min_std_image: 0.04,
            min_std_highfreq: 0.01,
            min_diff: 0.005,
        }
    }
}

impl Thresholds {
    pub const ZERO: Thresholds = Thresholds {
        min_std_image: 0.0,
        min_std_highfreq: 0.0,
        min_diff: 0.0,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    /// Enhancement model id, 1..=4.
    pub model_id: u8,
    pub image: ImageBuffer,
    pub difference: f64,
}

/// An original patch and its four enhanced crops, all cut at the same place.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGroup {
    pub group_id: String,
    pub spec: PatchSpec,
    pub original: ImageBuffer,
    pub variants: Vec<Variant>,
    pub score: InformativenessScore,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectParams {
    pub size: usize,
    pub max_overlap_fraction: f64,
    pub pyramid_levels: usize,
    pub thresholds: Thresholds,
    pub want: usize,
    pub seed: u64,
}

impl Default for SelectParams {
    fn default() -> Self {
        Self {
            size: DEFAULT_PATCH_SIZE,
            max_overlap_fraction: DEFAULT_MAX_OVERLAP,
            pyramid_levels: DEFAULT_PYRAMID_LEVELS,
            thresholds: Thresholds::default(),
            want: 8,
            seed: 0,
        }
    }
}

/// Proposes patches on `orig`, keeps those that are informative enough and
/// where at least one variant differs enough, and crops all five images at
/// the kept positions. Group ids are `{image_id}-p{proposal index:03}`.
pub fn select_groups(
    image_id: &str,
    orig: &ImageBuffer,
    enhanced: &[ImageBuffer; VARIANTS],
    params: &SelectParams,
) -> Result<Vec<PatchGroup>> {
    for e in enhanced {
        orig.ensure_same_dims(e)?;
    }
    let specs = propose_patches(
        image_id,
        orig.height(),
        orig.width(),
        params.size,
        params.max_overlap_fraction,
        params.want,
        params.seed,
    )?;
    let indexed: Vec<(usize, PatchSpec)> = specs.into_iter().enumerate().collect();
    let th = params.thresholds;
    let scored = par::try_map(&indexed, |(idx, spec)| -> Result<Option<PatchGroup>> {
        let original = spec.crop(orig)?;
        let score = informativeness(&original, params.pyramid_levels)?;
        if score.std_image < th.min_std_image || score.std_highfreq < th.min_std_highfreq {
            return Ok(None);
        }
        let mut variants = Vec::with_capacity(VARIANTS);
        for (m, e) in enhanced.iter().enumerate() {
            let image = spec.crop(e)?;
            let difference = enhancement_difference(&original, &image)?;
            variants.push(Variant {
                model_id: m as u8 + 1,
                image,
                difference,
            });
        }
        let max_diff = variants.iter().map(|v| v.difference).fold(0.0, f64::max);
        if max_diff < th.min_diff {
            return Ok(None);
        }
        Ok(Some(PatchGroup {
            group_id: format!("{image_id}-p{idx:03}"),
            spec: spec.clone(),
            original,
            variants,
            score,
        }))
    })?;
    Ok(scored.into_iter().flatten().collect())
}
