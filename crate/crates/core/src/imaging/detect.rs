//! Faint light source detection.
//!
//! A pixel `p` is a light source iff
//!
//! 1. it is the maximum of its `window × window` vicinity `N` (clipped at
//!    the image border), with equal values resolved in favor of the lowest
//!    row-major index so a flat plateau yields one detection, and
//! 2. `I_p > mean(N) + k · std(N)`, with the population standard deviation
//!    over `N` (including `p`).
//!
//! Condition 2 is evaluated as `(n·I_p − ΣN)² > k² · (n·ΣN² − (ΣN)²)` with
//! `n·I_p − ΣN > 0`. Vicinity sums come from summed-area tables; for 8-bit
//! input every term is an integer below 2⁵³, so the test is exact.

use super::{BinaryMap, GrayImage, ImagingError};

pub trait Intensity: Copy {
    fn to_f64(self) -> f64;
}

impl Intensity for u8 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}
impl Intensity for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}
impl Intensity for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// Required excess over the vicinity mean, in vicinity standard deviations.
    pub k: f64,
    /// Vicinity side length in pixels; odd and at least 3.
    pub window: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self { k: 2.5, window: 15 }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), ImagingError> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(ImagingError::InvalidDetector(format!(
                "window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(ImagingError::InvalidDetector(format!("k must be > 0, got {}", self.k)));
        }
        Ok(())
    }
}

/// Pixel column/row of a detected source and its intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub x: usize,
    pub y: usize,
    pub intensity: f64,
}

pub fn detect_light_sources(
    img: &GrayImage,
    params: &DetectorParams,
) -> Result<(BinaryMap, Vec<Detection>), ImagingError> {
    detect_light_sources_in(img.width(), img.height(), img.pixels(), params)
}

/// Detection on any row-major intensity buffer. Detections are sorted by
/// intensity, brightest first, then by row-major index.
pub fn detect_light_sources_in<T: Intensity>(
    width: usize,
    height: usize,
    pixels: &[T],
    params: &DetectorParams,
) -> Result<(BinaryMap, Vec<Detection>), ImagingError> {
    params.validate()?;
    if pixels.len() != width * height {
        return Err(ImagingError::SizeMismatch {
            expected: width * height,
            got: pixels.len(),
        });
    }
    let mut map = BinaryMap::empty(width, height);
    if pixels.is_empty() {
        return Ok((map, Vec::new()));
    }

    let vals: Vec<f64> = pixels.iter().map(|p| p.to_f64()).collect();
    let table = SummedArea::new(width, height, &vals);
    let r = params.window / 2;
    let k2 = params.k * params.k;

    let mut found = Vec::new();
    for y in 0..height {
        let (y0, y1) = (y.saturating_sub(r), (y + r).min(height - 1));
        for x in 0..width {
            let (x0, x1) = (x.saturating_sub(r), (x + r).min(width - 1));
            let i = vals[y * width + x];
            let n = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
            let (s, s2) = table.sums(x0, y0, x1, y1);
            let excess = n * i - s;
            if !(excess > 0.0) {
                continue;
            }
            let spread = (n * s2 - s * s).max(0.0);
            if !(excess * excess > k2 * spread) {
                continue;
            }
            if is_window_max(&vals, width, x, y, x0, y0, x1, y1) {
                found.push(Detection { x, y, intensity: i });
            }
        }
    }

    for d in &found {
        map.set(d.x, d.y, true);
    }
    found.sort_by(|a, b| {
        b.intensity
            .total_cmp(&a.intensity)
            .then((a.y, a.x).cmp(&(b.y, b.x)))
    });
    Ok((map, found))
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn is_window_max(vals: &[f64], width: usize, x: usize, y: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> bool {
    let i = vals[y * width + x];
    for qy in y0..=y1 {
        let row = &vals[qy * width..qy * width + width];
        for (qx, &q) in row.iter().enumerate().take(x1 + 1).skip(x0) {
            if q > i || (q == i && (qy, qx) < (y, x)) {
                return false;
            }
        }
    }
    true
}

struct SummedArea {
    stride: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl SummedArea {
    fn new(width: usize, height: usize, vals: &[f64]) -> Self {
        let stride = width + 1;
        let mut sum = vec![0.0; stride * (height + 1)];
        let mut sum_sq = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let (mut row, mut row_sq) = (0.0, 0.0);
            for x in 0..width {
                let v = vals[y * width + x];
                row += v;
                row_sq += v * v;
                let o = (y + 1) * stride + x + 1;
                sum[o] = sum[o - stride] + row;
                sum_sq[o] = sum_sq[o - stride] + row_sq;
            }
        }
        Self { stride, sum, sum_sq }
    }

    /// Sums over the inclusive rectangle.
    #[inline]
    fn sums(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> (f64, f64) {
        let s = self.stride;
        let (a, b, c, d) = (y0 * s + x0, y0 * s + x1 + 1, (y1 + 1) * s + x0, (y1 + 1) * s + x1 + 1);
        (
            self.sum[d] - self.sum[b] - self.sum[c] + self.sum[a],
            self.sum_sq[d] - self.sum_sq[b] - self.sum_sq[c] + self.sum_sq[a],
        )
    }
}
