use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::KernelMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlurMode {
    Iso,
    Aniso,
}

/// Discretized bivariate Gaussian on a `ksize`x`ksize` grid, rotated by
/// `theta`, normalized to sum 1. `Iso` ignores `sigma_y` and `theta`.
pub fn make_blur_kernel(
    mode: BlurMode,
    sigma_x: f64,
    sigma_y: f64,
    theta: f64,
    ksize: usize,
) -> Result<KernelMatrix> {
    if ksize.is_multiple_of(2) {
        return Err(Error::Kernel(format!("blur kernel size {ksize} is not odd")));
    }
    let (sigma_y, theta) = match mode {
        BlurMode::Iso => (sigma_x, 0.0),
        BlurMode::Aniso => (sigma_y, theta),
    };
    if !(sigma_x > 0.0 && sigma_y > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidParam(format!(
            "blur sigmas must be positive, got ({sigma_x}, {sigma_y})"
        )));
    }

    // Inverse covariance of R diag(sx^2, sy^2) R^T.
    let (s, c) = theta.sin_cos();
    let (ix, iy) = (1.0 / (sigma_x * sigma_x), 1.0 / (sigma_y * sigma_y));
    let a = c * c * ix + s * s * iy;
    let b = c * s * (ix - iy);
    let d = s * s * ix + c * c * iy;

    let r = (ksize / 2) as isize;
    let mut weights = Vec::with_capacity(ksize * ksize);
    for i in -r..=r {
        for j in -r..=r {
            let (y, x) = (i as f64, j as f64);
            let q = a * x * x + 2.0 * b * x * y + d * y * y;
            weights.push((-0.5 * q).exp());
        }
    }
    KernelMatrix::new(ksize, weights)?.normalized()
}
