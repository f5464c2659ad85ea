use serde::{Deserialize, Serialize};

use super::ImageBuffer;
use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeFilter {
    Nearest,
    Bilinear,
    #[default]
    Bicubic,
}

impl ResizeFilter {
    fn radius(self) -> f64 {
        match self {
            ResizeFilter::Nearest => 0.5,
            ResizeFilter::Bilinear => 1.0,
            ResizeFilter::Bicubic => 2.0,
        }
    }

    fn eval(self, t: f64) -> f64 {
        let t = t.abs();
        match self {
            ResizeFilter::Nearest => unreachable!("nearest is handled by index lookup"),
            ResizeFilter::Bilinear => (1.0 - t).max(0.0),
            ResizeFilter::Bicubic => cubic_keys(t),
        }
    }
}

/// Keys cubic convolution kernel with `a = -0.5`.
#[inline]
pub fn cubic_keys(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Per-output-index contributions along one axis.
struct AxisWeights {
    /// `(first source index, weights)`; indices past the edges are clamped.
    taps: Vec<(isize, Vec<f64>)>,
}

impl AxisWeights {
    fn new(src: usize, dst: usize, filter: ResizeFilter) -> Self {
        let ratio = src as f64 / dst as f64;
        // Widen the filter when shrinking so it integrates over the footprint.
        let stretch = ratio.max(1.0);
        let support = filter.radius() * stretch;
        let taps = (0..dst)
            .map(|o| {
                let center = (o as f64 + 0.5) * ratio - 0.5;
                let first = (center - support).floor() as isize;
                let last = (center + support).ceil() as isize;
                let mut ws: Vec<f64> = (first..=last)
                    .map(|i| filter.eval((i as f64 - center) / stretch))
                    .collect();
                let sum: f64 = ws.iter().sum();
                for w in &mut ws {
                    *w /= sum;
                }
                (first, ws)
            })
            .collect();
        Self { taps }
    }
}

/// Resamples to `target_h` x `target_w` using pixel-center alignment and a
/// replicate border. Output is clamped to `[0, 1]`.
pub fn resize(
    img: &ImageBuffer,
    target_h: usize,
    target_w: usize,
    filter: ResizeFilter,
) -> Result<ImageBuffer> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::Geometry(format!("zero resize target {target_h}x{target_w}")));
    }
    if (img.height(), img.width()) == (target_h, target_w) {
        return Ok(img.clone().clamped());
    }
    let out = match filter {
        ResizeFilter::Nearest => resize_nearest(img, target_h, target_w),
        _ => resize_separable(img, target_h, target_w, filter),
    };
    Ok(out.clamped())
}

fn nearest_index(o: usize, src: usize, dst: usize) -> usize {
    let s = ((o as f64 + 0.5) * src as f64 / dst as f64).floor() as usize;
    s.min(src - 1)
}

fn resize_nearest(img: &ImageBuffer, th: usize, tw: usize) -> ImageBuffer {
    let (h, w, c) = img.dims();
    let mut out = vec![0.0; th * tw * c];
    par::for_each_row_mut(&mut out, tw * c, |y, row| {
        let sy = nearest_index(y, h, th);
        for x in 0..tw {
            let sx = nearest_index(x, w, tw);
            for ch in 0..c {
                row[x * c + ch] = img.get(sy, sx, ch);
            }
        }
    });
    ImageBuffer::new(th, tw, c, out).expect("valid geometry")
}

fn resize_separable(img: &ImageBuffer, th: usize, tw: usize, filter: ResizeFilter) -> ImageBuffer {
    let (h, w, c) = img.dims();
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    // horizontal pass: h x tw
    let xw = AxisWeights::new(w, tw, filter);
    let mut tmp = vec![0.0; h * tw * c];
    par::for_each_row_mut(&mut tmp, tw * c, |y, row| {
        for (x, (first, ws)) in xw.taps.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, &wt) in ws.iter().enumerate() {
                    acc += wt * img.get(y, clamp(first + k as isize, w), ch);
                }
                row[x * c + ch] = acc;
            }
        }
    });

    // vertical pass: th x tw
    let yw = AxisWeights::new(h, th, filter);
    let mut out = vec![0.0; th * tw * c];
    par::for_each_row_mut(&mut out, tw * c, |y, row| {
        let (first, ws) = &yw.taps[y];
        for (k, &wt) in ws.iter().enumerate() {
            let sy = clamp(first + k as isize, h);
            let src = &tmp[sy * tw * c..(sy + 1) * tw * c];
            for (o, s) in row.iter_mut().zip(src) {
                *o += wt * s;
            }
        }
    });
    ImageBuffer::new(th, tw, c, out).expect("valid geometry")
}
