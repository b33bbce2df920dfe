//! Parametric frame renderer standing in for a full scene renderer.
//!
//! A frame is split into two layers drawn from the seed alone:
//!
//! * background: mean level plus a spatially correlated Gaussian field with
//!   standard deviation `background_sigma` and correlation length
//!   `background_corr_px` (three box-blur passes over white noise);
//! * sources: beacons and clutter blobs at unit exposure gain.
//!
//! The exposed frame is `clamp(background + gain * sources)`. Because no
//! random draw depends on the gain, re-exposing the same layers is monotone
//! in the gain pixel by pixel.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use std::collections::HashSet;

use super::exposure::bisect_gain;
use super::{quantize, GainBounds, GrayImage, ImagingError};
use crate::geometry::{make_homography, CameraModel, Pose3};
use crate::rng::StreamRng;
use crate::world::BeaconMap;
use nalgebra::Vector3;
use rand::SeedableRng;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneRenderConfig {
    /// Beacon intensity at 1 m range and unit gain.
    pub beacon_power: f64,
    pub psf_sigma: f64,
    pub background_mean: f64,
    pub background_sigma: f64,
    /// Correlation length of the background field; 0 gives white noise.
    pub background_corr_px: f64,
    /// Expected clutter blobs per frame.
    pub clutter_rate: f64,
    /// Clutter peak amplitude range at unit gain.
    pub clutter_power_range: (f64, f64),
    pub saturation: f64,
}

impl Default for SceneRenderConfig {
    fn default() -> Self {
        Self {
            beacon_power: 1.0e8,
            psf_sigma: 1.0,
            background_mean: 30.0,
            background_sigma: 5.0,
            background_corr_px: 4.0,
            clutter_rate: 5.0,
            clutter_power_range: (40.0, 160.0),
            saturation: 255.0,
        }
    }
}

impl SceneRenderConfig {
    pub fn validate(&self) -> Result<(), ImagingError> {
        let bad = |m: String| Err(ImagingError::InvalidRender(m));
        if !(self.psf_sigma > 0.0 && self.psf_sigma.is_finite()) {
            return bad(format!("psf sigma must be > 0, got {}", self.psf_sigma));
        }
        if !(self.background_sigma >= 0.0 && self.background_sigma.is_finite()) {
            return bad(format!("background sigma must be >= 0, got {}", self.background_sigma));
        }
        if !(self.background_corr_px >= 0.0 && self.background_corr_px.is_finite()) {
            return bad(format!("background correlation must be >= 0, got {}", self.background_corr_px));
        }
        if !(self.clutter_rate >= 0.0 && self.clutter_rate.is_finite()) {
            return bad(format!("clutter rate must be >= 0, got {}", self.clutter_rate));
        }
        let (lo, hi) = self.clutter_power_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("clutter power range [{lo}, {hi}] is invalid"));
        }
        if !(self.beacon_power >= 0.0 && self.beacon_power.is_finite()) {
            return bad(format!("beacon power must be >= 0, got {}", self.beacon_power));
        }
        if !(self.saturation > 0.0 && self.saturation <= 255.0) {
            return bad(format!("saturation must be in (0, 255], got {}", self.saturation));
        }
        if !self.background_mean.is_finite() {
            return bad("background mean must be finite".into());
        }
        Ok(())
    }
}

/// Inverse-square peak amplitude of a beacon blob.
pub fn beacon_peak_amplitude(gain: f64, power: f64, range_m: f64) -> f64 {
    gain * power / (range_m * range_m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneLayers {
    width: usize,
    height: usize,
    saturation: f64,
    background: Vec<f32>,
    sources: Vec<f32>,
}

impl SceneLayers {
    pub fn render(
        camera: &CameraModel,
        truth_pose: &Pose3,
        beacons: &BeaconMap,
        cfg: &SceneRenderConfig,
        seed: u64,
    ) -> Result<Self, ImagingError> {
        cfg.validate()?;
        let width = camera.width() as usize;
        let height = camera.height() as usize;
        let mut rng = StreamRng::seed_from_u64(seed);

        let background = background_field(width, height, cfg, &mut rng);
        let mut sources = vec![0f32; width * height];

        let h = make_homography(camera, truth_pose)
            .map_err(|e| ImagingError::InvalidRender(format!("cannot render from this pose: {e}")))?;
        let cam_center = truth_pose.transform_point(camera.mount().translation());
        for p in beacons.positions() {
            let Some((u, v)) = h.project(p.x, p.y) else { continue };
            let range = (Vector3::new(p.x, p.y, 0.0) - cam_center).norm();
            let amp = beacon_peak_amplitude(1.0, cfg.beacon_power, range);
            splat_gaussian(&mut sources, width, height, u, v, amp, cfg.psf_sigma);
        }

        let clutter_count = if cfg.clutter_rate > 0.0 {
            Poisson::new(cfg.clutter_rate).map(|d| d.sample(&mut rng) as usize).unwrap_or(0)
        } else {
            0
        };
        let (lo, hi) = cfg.clutter_power_range;
        for _ in 0..clutter_count {
            let u = rng.random::<f64>() * width as f64;
            let v = rng.random::<f64>() * height as f64;
            let amp = lo + (hi - lo) * rng.random::<f64>();
            splat_gaussian(&mut sources, width, height, u, v, amp, cfg.psf_sigma);
        }

        Ok(Self {
            width,
            height,
            saturation: cfg.saturation,
            background,
            sources,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }

    /// Pre-quantization intensities at `gain`, not clamped.
    pub fn expose_float(&self, gain: f64) -> Vec<f64> {
        self.background
            .iter()
            .zip(&self.sources)
            .map(|(&b, &s)| b as f64 + gain * s as f64)
            .collect()
    }

    pub fn expose(&self, gain: f64) -> GrayImage {
        let sat = self.saturation;
        let pixels = self
            .background
            .iter()
            .zip(&self.sources)
            .map(|(&b, &s)| quantize((b as f64 + gain * s as f64).min(sat)))
            .collect();
        GrayImage::new(self.width, self.height, pixels).expect("layer sizes match")
    }
}

impl SceneLayers {
    /// Same as [`largest_saturated_component`] on [`expose`](Self::expose)`(gain)`,
    /// looking only at pixels that receive light from a source.
    pub fn largest_saturated_component(&self, gain: f64) -> usize {
        self.saturated_component_among(&self.saturation_candidates(gain), gain)
    }

    /// [`auto_exposure`](super::auto_exposure) over these layers without
    /// materializing a frame per probe.
    pub fn auto_exposure(&self, max_sat_component: usize, bounds: GainBounds) -> Result<f64, ImagingError> {
        let candidates = self.saturation_candidates(bounds.hi);
        bisect_gain(|g| self.saturated_component_among(&candidates, g), max_sat_component, bounds)
    }

    fn level(&self, i: usize, gain: f64) -> u8 {
        quantize((self.background[i] as f64 + gain * self.sources[i] as f64).min(self.saturation))
    }

    /// Pixels saturated at `gain`; by monotonicity this covers every lower gain.
    fn saturation_candidates(&self, gain: f64) -> Vec<usize> {
        let top = quantize(self.saturation);
        (0..self.background.len()).filter(|&i| self.level(i, gain) >= top).collect()
    }

    fn saturated_component_among(&self, candidates: &[usize], gain: f64) -> usize {
        let top = quantize(self.saturation);
        let on: HashSet<usize> = candidates.iter().copied().filter(|&i| self.level(i, gain) >= top).collect();
        let (w, h) = (self.width as isize, self.height as isize);
        let mut seen = HashSet::new();
        let mut best = 0;
        let mut stack = Vec::new();
        for &start in candidates {
            if !on.contains(&start) || !seen.insert(start) {
                continue;
            }
            stack.push(start);
            let mut area = 0;
            while let Some(i) = stack.pop() {
                area += 1;
                let (x, y) = ((i % self.width) as isize, (i / self.width) as isize);
                for (dx, dy) in NEIGHBORS_8 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = ny as usize * self.width + nx as usize;
                    if on.contains(&j) && seen.insert(j) {
                        stack.push(j);
                    }
                }
            }
            best = best.max(area);
        }
        best
    }
}

const NEIGHBORS_8: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// Renders one 8-bit frame at the camera's exposure gain.
pub fn render_frame(
    camera: &CameraModel,
    truth_pose: &Pose3,
    beacons: &BeaconMap,
    cfg: &SceneRenderConfig,
    seed: u64,
) -> Result<GrayImage, ImagingError> {
    Ok(SceneLayers::render(camera, truth_pose, beacons, cfg, seed)?.expose(camera.exposure_gain()))
}

fn splat_gaussian(buf: &mut [f32], width: usize, height: usize, u: f64, v: f64, amp: f64, sigma: f64) {
    if amp <= 0.0 || !u.is_finite() || !v.is_finite() {
        return;
    }
    let reach = (4.0 * sigma).ceil();
    let x0 = (u - reach).floor().max(0.0);
    let x1 = (u + reach).ceil().min(width as f64 - 1.0);
    let y0 = (v - reach).floor().max(0.0);
    let y1 = (v + reach).ceil().min(height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    let (x0, x1, y0, y1) = (x0 as usize, x1 as usize, y0 as usize, y1 as usize);
    let gx: Vec<f64> = (x0..=x1).map(|x| (-(x as f64 + 0.5 - u).powi(2) * inv).exp()).collect();
    for y in y0..=y1 {
        let gy = amp * (-(y as f64 + 0.5 - v).powi(2) * inv).exp();
        let row = &mut buf[y * width + x0..=y * width + x1];
        for (px, g) in row.iter_mut().zip(&gx) {
            *px += (gy * g) as f32;
        }
    }
}

fn background_field(width: usize, height: usize, cfg: &SceneRenderConfig, rng: &mut StreamRng) -> Vec<f32> {
    let mean = cfg.background_mean as f32;
    if cfg.background_sigma == 0.0 {
        return vec![mean; width * height];
    }
    let mut noise: Vec<f32> = (0..width * height)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z as f32
        })
        .collect();
    let radius = box_radius(cfg.background_corr_px);
    let mut gain = 1.0;
    if radius > 0 {
        let mut scratch = vec![0f32; width.max(height)];
        for _ in 0..3 {
            box_blur_rows(&mut noise, width, height, radius, &mut scratch);
            box_blur_cols(&mut noise, width, height, radius);
        }
        gain = 1.0 / triple_box_kernel_norm(radius).powi(2);
    }
    let scale = (cfg.background_sigma * gain) as f32;
    noise.iter_mut().for_each(|z| *z = mean + scale * *z);
    noise
}

/// Box radius whose triple pass approximates a Gaussian of `sigma`.
fn box_radius(sigma: f64) -> usize {
    if sigma <= 0.0 {
        return 0;
    }
    // variance of three passes of a (2r+1)-wide box: ((2r+1)^2 - 1) / 4
    let width = (4.0 * sigma * sigma + 1.0).sqrt();
    ((width - 1.0) / 2.0).round().max(1.0) as usize
}

/// L2 norm of the 1-D kernel of three box passes; white noise blurred by it
/// keeps `norm²` of its variance per axis.
fn triple_box_kernel_norm(radius: usize) -> f64 {
    let w = 2 * radius + 1;
    let boxk = vec![1.0 / w as f64; w];
    let conv = |a: &[f64], b: &[f64]| {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    };
    let k = conv(&conv(&boxk, &boxk), &boxk);
    k.iter().map(|v| v * v).sum::<f64>().sqrt()
}

// Edges replicate the border pixel.
fn box_blur_line(line: &mut [f32], radius: usize, scratch: &mut [f32]) {
    let n = line.len();
    let last = n - 1;
    let mut acc: f32 = (0..=2 * radius).map(|j| line[j.saturating_sub(radius).min(last)]).sum();
    let inv = 1.0 / (2 * radius + 1) as f32;
    for i in 0..n {
        scratch[i] = acc * inv;
        acc += line[(i + radius + 1).min(last)] - line[i.saturating_sub(radius)];
    }
    line.copy_from_slice(&scratch[..n]);
}

fn box_blur_rows(buf: &mut [f32], width: usize, height: usize, radius: usize, scratch: &mut [f32]) {
    for y in 0..height {
        box_blur_line(&mut buf[y * width..(y + 1) * width], radius, scratch);
    }
}

/// Vertical pass with one running sum per column, walking whole rows.
fn box_blur_cols(buf: &mut [f32], width: usize, height: usize, radius: usize) {
    let last = height - 1;
    let inv = 1.0 / (2 * radius + 1) as f32;
    let row = |y: usize| y * width..(y + 1) * width;
    let mut acc = vec![0f32; width];
    for j in 0..=2 * radius {
        let src = &buf[row(j.saturating_sub(radius).min(last))];
        acc.iter_mut().zip(src).for_each(|(a, v)| *a += v);
    }
    let mut out = vec![0f32; width * height];
    for y in 0..height {
        out[row(y)].iter_mut().zip(&acc).for_each(|(o, a)| *o = a * inv);
        let (add, sub) = ((y + radius + 1).min(last), y.saturating_sub(radius));
        for x in 0..width {
            acc[x] += buf[add * width + x] - buf[sub * width + x];
        }
    }
    buf.copy_from_slice(&out);
}
