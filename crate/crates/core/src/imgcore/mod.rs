//! Image representation and the numerical primitives everything else builds on.

mod buffer;
mod convolve;
mod kernel;
mod pyramid;
mod resize;

pub use buffer::{quantize_u8, ImageBuffer, LUMA_WEIGHTS};
pub use convolve::{convolve2d, BorderPolicy};
pub use kernel::KernelMatrix;
pub use pyramid::{expand, laplacian_pyramid, reconstruct_pyramid, reduce, LaplacianPyramid, BINOMIAL_5};
pub use resize::{cubic_keys, resize, ResizeFilter};

pub(crate) use buffer::population_std;

use crate::error::{Error, Result};
use crate::par;

/// Luminance with weights 0.299 / 0.587 / 0.114. A 1-channel input is returned as is.
pub fn to_luma(img: &ImageBuffer) -> ImageBuffer {
    if img.channels() == 1 {
        return img.clone();
    }
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let samples = img
        .samples()
        .chunks_exact(3)
        .map(|p| wr * p[0] + wg * p[1] + wb * p[2])
        .collect();
    ImageBuffer::new(img.height(), img.width(), 1, samples).expect("same geometry")
}

/// Population variance over the `window`x`window` neighbourhood of every
/// pixel of a 1-channel image, with replicate border.
pub fn local_variance_map(img: &ImageBuffer, window: usize) -> Result<ImageBuffer> {
    if img.channels() != 1 {
        return Err(Error::InvalidParam(format!(
            "local variance expects 1 channel, got {}",
            img.channels()
        )));
    }
    if window.is_multiple_of(2) {
        return Err(Error::InvalidParam(format!("window {window} is not odd")));
    }
    if window > img.height().min(img.width()) {
        return Err(Error::InvalidParam(format!(
            "window {window} larger than {}x{} image",
            img.height(),
            img.width()
        )));
    }
    let (h, w) = (img.height(), img.width());
    let r = (window / 2) as isize;
    let n = (window * window) as f64;
    let border = BorderPolicy::Replicate;
    let mut out = vec![0.0; h * w];
    par::for_each_row_mut(&mut out, w, |y, row| {
        let mut vals = Vec::with_capacity(window * window);
        for (x, o) in row.iter_mut().enumerate() {
            vals.clear();
            for dy in -r..=r {
                let sy = border.index(y as isize + dy, h);
                for dx in -r..=r {
                    vals.push(img.get(sy, border.index(x as isize + dx, w), 0));
                }
            }
            let mean = vals.iter().sum::<f64>() / n;
            *o = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        }
    });
    Ok(img.with_samples(out))
}
