//! Laplacian pyramids.
//!
//! Reduce: blur with the 5x5 binomial kernel (outer product of
//! `[1, 4, 6, 4, 1] / 16`, replicate border), then keep even rows and columns.
//! Expand: per axis, even outputs take `[1, 6, 1] / 8` of the three nearest
//! coarse samples and odd outputs the average of the two neighbours (the
//! same binomial taps doubled and split by parity), clamped at the edges.
//! Each band is `gaussian[k] - expand(gaussian[k + 1])`, so reconstruction is
//! an exact telescoping sum up to float round-off.

use super::convolve::convolve_separable;
use super::{BorderPolicy, ImageBuffer};
use crate::error::{Error, Result};
use crate::par;

pub const BINOMIAL_5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianPyramid {
    /// Band-pass images, finest first.
    pub levels: Vec<ImageBuffer>,
    /// Low-pass image at the coarsest scale.
    pub residual: ImageBuffer,
}

impl LaplacianPyramid {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Every band-pass sample, finest level first.
    pub fn band_samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.levels.iter().flat_map(|l| l.samples().iter().copied())
    }
}

/// Blur then decimate by two (ceiling division of each dimension).
pub fn reduce(img: &ImageBuffer) -> ImageBuffer {
    let blurred = convolve_separable(img, &BINOMIAL_5, BorderPolicy::Replicate);
    let (h, w, c) = img.dims();
    let (nh, nw) = (h.div_ceil(2), w.div_ceil(2));
    ImageBuffer::from_fn(nh, nw, c, |y, x, ch| blurred.get(2 * y, 2 * x, ch)).expect("non-empty")
}

/// Upsample a coarse image to `(h, w)` (each within one of twice the coarse size).
pub fn expand(coarse: &ImageBuffer, h: usize, w: usize) -> ImageBuffer {
    let c = coarse.channels();
    let (ch_, cw) = (coarse.height(), coarse.width());
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    // horizontal: ch_ x w
    let mut tmp = vec![0.0; ch_ * w * c];
    par::for_each_row_mut(&mut tmp, w * c, |y, row| {
        for x in 0..w {
            for k in 0..c {
                row[x * c + k] = axis_expand(x, |m| coarse.get(y, clamp(m, cw), k));
            }
        }
    });
    let tmp = ImageBuffer::new(ch_, w, c, tmp).expect("non-empty");

    let mut out = vec![0.0; h * w * c];
    par::for_each_row_mut(&mut out, w * c, |y, row| {
        for x in 0..w {
            for k in 0..c {
                row[x * c + k] = axis_expand(y, |m| tmp.get(clamp(m, ch_), x, k));
            }
        }
    });
    ImageBuffer::new(h, w, c, out).expect("non-empty")
}

#[inline]
fn axis_expand(i: usize, sample: impl Fn(isize) -> f64) -> f64 {
    let half = (i / 2) as isize;
    if i.is_multiple_of(2) {
        0.125 * sample(half - 1) + 0.75 * sample(half) + 0.125 * sample(half + 1)
    } else {
        0.5 * sample(half) + 0.5 * sample(half + 1)
    }
}

/// Builds a pyramid with `levels` band-pass images.
pub fn laplacian_pyramid(img: &ImageBuffer, levels: usize) -> Result<LaplacianPyramid> {
    if levels == 0 {
        return Err(Error::InvalidParam("pyramid needs at least one level".into()));
    }
    let min_side = img.height().min(img.width());
    if levels >= usize::BITS as usize || min_side >> levels == 0 {
        return Err(Error::InvalidParam(format!(
            "{levels} pyramid levels too many for a {}x{} image",
            img.height(),
            img.width()
        )));
    }
    let mut bands = Vec::with_capacity(levels);
    let mut current = img.clone();
    for _ in 0..levels {
        let next = reduce(&current);
        let up = expand(&next, current.height(), current.width());
        let band: Vec<f64> = current
            .samples()
            .iter()
            .zip(up.samples())
            .map(|(a, b)| a - b)
            .collect();
        bands.push(current.with_samples(band));
        current = next;
    }
    Ok(LaplacianPyramid {
        levels: bands,
        residual: current,
    })
}

/// Inverse of [`laplacian_pyramid`].
pub fn reconstruct_pyramid(p: &LaplacianPyramid) -> Result<ImageBuffer> {
    let mut current = p.residual.clone();
    for band in p.levels.iter().rev() {
        let (h, w) = (band.height(), band.width());
        if band.channels() != current.channels()
            || h.div_ceil(2) != current.height()
            || w.div_ceil(2) != current.width()
        {
            return Err(Error::Geometry(format!(
                "band {}x{}x{} inconsistent with coarser level {}x{}x{}",
                h,
                w,
                band.channels(),
                current.height(),
                current.width(),
                current.channels()
            )));
        }
        let up = expand(&current, h, w);
        let sum = band
            .samples()
            .iter()
            .zip(up.samples())
            .map(|(a, b)| a + b)
            .collect();
        current = band.with_samples(sum);
    }
    Ok(current)
}
