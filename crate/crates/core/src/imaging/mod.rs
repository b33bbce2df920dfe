//! Synthetic frames, exposure selection, light source detection and the
//! distance map the measurement model reads.

mod detect;
mod distance;
mod exposure;
pub mod pnm;
mod render;

pub use detect::{detect_light_sources, detect_light_sources_in, Detection, DetectorParams, Intensity};
pub use distance::{distance_transform, DistanceMap};
pub use exposure::{auto_exposure, largest_saturated_component, GainBounds};
pub use render::{beacon_peak_amplitude, render_frame, SceneLayers, SceneRenderConfig};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImagingError {
    #[error("invalid render configuration: {0}")]
    InvalidRender(String),
    #[error("invalid detector parameters: {0}")]
    InvalidDetector(String),
    #[error("invalid gain bounds [{lo}, {hi}]")]
    InvalidGainBounds { lo: f64, hi: f64 },
    #[error("even the lowest gain {gain} leaves a saturated component of {area} px (limit {limit} px)")]
    NoFeasibleGain { gain: f64, area: usize, limit: usize },
    #[error("image size mismatch: expected {expected} pixels, got {got}")]
    SizeMismatch { expected: usize, got: usize },
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        if pixels.len() != width * height {
            return Err(ImagingError::SizeMismatch {
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    /// Rounds and clamps float intensities to `[0, 255]`.
    pub fn from_float(width: usize, height: usize, values: &[f64]) -> Result<Self, ImagingError> {
        if values.len() != width * height {
            return Err(ImagingError::SizeMismatch {
                expected: width * height,
                got: values.len(),
            });
        }
        let pixels = values.iter().map(|&v| quantize(v)).collect();
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }
}

#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    // NaN maps to 0 through the saturating cast
    v.round().clamp(0.0, 255.0) as u8
}

/// Set of detected light source centers, one pixel per source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, ImagingError> {
        if bits.len() != width * height {
            return Err(ImagingError::SizeMismatch {
                expected: width * height,
                got: bits.len(),
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.bits[y * self.width + x] = on;
    }
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}
