use serde::{Deserialize, Serialize};

use super::{ImageBuffer, KernelMatrix};
use crate::error::{Error, Result};
use crate::par;

/// How samples outside the image are synthesized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BorderPolicy {
    /// Repeat the edge sample: `aaa|abcd|ddd`.
    #[default]
    Replicate,
    /// Mirror without repeating the edge: `dcb|abcd|cba`.
    Reflect,
}

impl BorderPolicy {
    /// Maps a possibly out-of-range coordinate into `0..n`.
    #[inline]
    pub fn index(self, i: isize, n: usize) -> usize {
        let n = n as isize;
        let j = match self {
            BorderPolicy::Replicate => i.clamp(0, n - 1),
            BorderPolicy::Reflect => {
                if n == 1 {
                    0
                } else {
                    let period = 2 * (n - 1);
                    let m = i.rem_euclid(period);
                    if m < n {
                        m
                    } else {
                        period - m
                    }
                }
            }
        };
        j as usize
    }
}

/// 2-D convolution applied independently to every channel.
///
/// This is true convolution (the kernel is flipped), so convolving an impulse
/// stamps the kernel unchanged. Output has the input's dimensions.
pub fn convolve2d(img: &ImageBuffer, k: &KernelMatrix, border: BorderPolicy) -> Result<ImageBuffer> {
    if k.size() > img.height().min(img.width()) {
        return Err(Error::Kernel(format!(
            "{}x{} kernel larger than {}x{} image",
            k.size(),
            k.size(),
            img.height(),
            img.width()
        )));
    }
    if k.size() == 1 {
        let w = k.at(0, 0);
        return Ok(if w == 1.0 { img.clone() } else { img.map(|v| v * w) });
    }
    let (h, w, c) = img.dims();
    let r = k.radius() as isize;
    let size = k.size();
    let mut out = vec![0.0; img.len()];
    par::for_each_row_mut(&mut out, w * c, |y, row| {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for i in 0..size {
                    let sy = border.index(y as isize + r - i as isize, h);
                    for j in 0..size {
                        let sx = border.index(x as isize + r - j as isize, w);
                        acc += k.at(i, j) * img.get(sy, sx, ch);
                    }
                }
                row[x * c + ch] = acc;
            }
        }
    });
    Ok(img.with_samples(out))
}

/// Separable convolution with the same 1-D kernel along both axes.
pub(crate) fn convolve_separable(img: &ImageBuffer, taps: &[f64], border: BorderPolicy) -> ImageBuffer {
    let (h, w, c) = img.dims();
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; img.len()];
    par::for_each_row_mut(&mut tmp, w * c, |y, row| {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (j, &t) in taps.iter().enumerate() {
                    let sx = border.index(x as isize + r - j as isize, w);
                    acc += t * img.get(y, sx, ch);
                }
                row[x * c + ch] = acc;
            }
        }
    });
    let tmp = img.with_samples(tmp);
    let mut out = vec![0.0; img.len()];
    par::for_each_row_mut(&mut out, w * c, |y, row| {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (i, &t) in taps.iter().enumerate() {
                    let sy = border.index(y as isize + r - i as isize, h);
                    acc += t * tmp.get(sy, x, ch);
                }
                row[x * c + ch] = acc;
            }
        }
    });
    img.with_samples(out)
}
