use crate::error::{Error, Result};

/// A square convolution kernel with odd side length, row-major weights.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    size: usize,
    weights: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(Error::Kernel(format!("side length {size} is not odd")));
        }
        if weights.len() != size * size {
            return Err(Error::Kernel(format!(
                "{} weights for a {size}x{size} kernel",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("kernel weights"));
        }
        Ok(Self { size, weights })
    }

    /// The 1x1 kernel `[1]`.
    pub fn identity() -> Self {
        Self {
            size: 1,
            weights: vec![1.0],
        }
    }

    /// Normalized `size`x`size` box filter.
    pub fn boxed(size: usize) -> Result<Self> {
        let n = (size * size) as f64;
        Self::new(size, vec![1.0 / n; size * size])
    }

    /// Outer product `col * row^T` of two equal-length odd vectors.
    pub fn separable(col: &[f64], row: &[f64]) -> Result<Self> {
        if col.len() != row.len() {
            return Err(Error::Kernel("separable factors differ in length".into()));
        }
        let weights = col
            .iter()
            .flat_map(|&a| row.iter().map(move |&b| a * b))
            .collect();
        Self::new(col.len(), weights)
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.size / 2
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at row `i`, column `j` (both in `0..size`).
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.size + j]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Divides by the weight sum so the kernel sums to one.
    pub fn normalized(mut self) -> Result<Self> {
        let s = self.sum();
        if s <= 0.0 || !s.is_finite() {
            return Err(Error::Kernel(format!("cannot normalize, sum = {s}")));
        }
        for w in &mut self.weights {
            *w /= s;
        }
        Ok(self)
    }
}
