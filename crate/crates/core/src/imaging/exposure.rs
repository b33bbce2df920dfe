//! Exposure selection: the brightest gain that keeps every saturated blob small.

use super::{GrayImage, ImagingError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainBounds {
    pub lo: f64,
    pub hi: f64,
}

impl GainBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self, ImagingError> {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(ImagingError::InvalidGainBounds { lo, hi });
        }
        Ok(Self { lo, hi })
    }
}

/// Relative width of the final bisection bracket.
const GAIN_REL_TOL: f64 = 1e-3;

/// Area of the largest 8-connected component of pixels at or above `saturation`.
pub fn largest_saturated_component(img: &GrayImage, saturation: u8) -> usize {
    let (w, h) = (img.width(), img.height());
    let px = img.pixels();
    let mut seen = vec![false; px.len()];
    let mut stack = Vec::new();
    let mut best = 0;
    for start in 0..px.len() {
        if seen[start] || px[start] < saturation {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut area = 0;
        while let Some(i) = stack.pop() {
            area += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !seen[j] && px[j] >= saturation {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        best = best.max(area);
    }
    best
}

/// Largest gain in `bounds` (to relative tolerance 1e-3) whose frame has no
/// saturated component larger than `max_sat_component` pixels.
///
/// Bisection runs in log-gain and assumes the probe is monotone in the gain,
/// which holds for frames re-exposed from fixed [`SceneLayers`](super::SceneLayers).
pub fn auto_exposure<F>(
    mut probe: F,
    saturation: u8,
    max_sat_component: usize,
    bounds: GainBounds,
) -> Result<f64, ImagingError>
where
    F: FnMut(f64) -> GrayImage,
{
    bisect_gain(
        |g| largest_saturated_component(&probe(g), saturation),
        max_sat_component,
        bounds,
    )
}

/// Bisection shared by [`auto_exposure`] and the layer-based search;
/// `largest` returns the biggest saturated component at a gain.
pub(crate) fn bisect_gain<F>(mut largest: F, max_sat_component: usize, bounds: GainBounds) -> Result<f64, ImagingError>
where
    F: FnMut(f64) -> usize,
{
    if largest(bounds.hi) <= max_sat_component {
        return Ok(bounds.hi);
    }
    let bottom = largest(bounds.lo);
    if bottom > max_sat_component {
        return Err(ImagingError::NoFeasibleGain {
            gain: bounds.lo,
            area: bottom,
            limit: max_sat_component,
        });
    }
    let (mut lo, mut hi) = (bounds.lo, bounds.hi);
    while hi / lo > 1.0 + GAIN_REL_TOL {
        let mid = (lo * hi).sqrt();
        if largest(mid) <= max_sat_component {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::SceneLayers;
    use crate::imaging::SceneRenderConfig;
    use crate::geometry::{CameraModel, Pose3};
    use crate::world::BeaconMap;
    use nalgebra::{Point2, Vector3};

    fn camera() -> CameraModel {
        CameraModel::new(800.0, 800.0, 320.0, 240.0, 640, 480, CameraModel::forward_mount(Vector3::zeros(), 0.0)).unwrap()
    }

    fn map() -> BeaconMap {
        BeaconMap::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(9000.0, 0.0),
            Point2::new(9000.0, 1.0),
            Point2::new(9000.0, 2.0),
        ])
        .unwrap()
    }

    fn layers(power: f64) -> SceneLayers {
        let cfg = SceneRenderConfig {
            beacon_power: power,
            clutter_rate: 0.0,
            ..SceneRenderConfig::default()
        };
        let pose = Pose3::from_euler_deg(0.0, 90.0, 0.0, Vector3::new(0.0, 0.0, 40.0));
        SceneLayers::render(&camera(), &pose, &map(), &cfg, 3).unwrap()
    }

    #[test]
    fn components_are_eight_connected() {
        let mut img = GrayImage::filled(6, 6, 0);
        img.set(1, 1, 255);
        img.set(2, 2, 255);
        img.set(3, 3, 255);
        img.set(5, 0, 255);
        assert_eq!(largest_saturated_component(&img, 255), 3);
        assert_eq!(largest_saturated_component(&GrayImage::filled(3, 3, 10), 255), 0);
        assert_eq!(largest_saturated_component(&GrayImage::filled(3, 3, 255), 255), 9);
    }

    #[test]
    fn dark_scene_takes_upper_bound() {
        let l = layers(0.0);
        let g = auto_exposure(|g| l.expose(g), 255, 4, GainBounds::new(0.01, 50.0).unwrap()).unwrap();
        assert_eq!(g, 50.0);
    }

    #[test]
    fn single_beacon_gain_is_tight() {
        let l = layers(1.0e7);
        let limit = 5;
        let bounds = GainBounds::new(1e-4, 10.0).unwrap();
        let g = auto_exposure(|g| l.expose(g), 255, limit, bounds).unwrap();
        assert!(g < bounds.hi);
        assert!(largest_saturated_component(&l.expose(g), 255) <= limit);
        assert!(largest_saturated_component(&l.expose(g * 1.01), 255) > limit);
    }

    #[test]
    fn infeasible_lower_bound() {
        let l = layers(1.0e9);
        let err = auto_exposure(|g| l.expose(g), 255, 2, GainBounds::new(1.0, 2.0).unwrap()).unwrap_err();
        assert!(matches!(err, ImagingError::NoFeasibleGain { .. }));
    }

    #[test]
    fn layer_search_matches_image_search() {
        for power in [1.0e6, 1.0e7, 3.0e7, 1.0e8] {
            let l = layers(power);
            let bounds = GainBounds::new(1e-4, 10.0).unwrap();
            for limit in [1, 3, 5, 12] {
                let slow = auto_exposure(|g| l.expose(g), 255, limit, bounds);
                assert_eq!(l.auto_exposure(limit, bounds), slow, "power {power} limit {limit}");
            }
            for g in [1e-3, 0.05, 0.3, 2.0, 9.0] {
                assert_eq!(l.largest_saturated_component(g), largest_saturated_component(&l.expose(g), 255));
            }
        }
    }

    #[test]
    fn bad_bounds() {
        assert!(GainBounds::new(0.0, 1.0).is_err());
        assert!(GainBounds::new(2.0, 1.0).is_err());
    }
}
