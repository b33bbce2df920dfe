//! Run configuration.
//!
//! A TOML document with one table per subsystem and units in the key names.
//! Every key has a default, so an empty file (or an empty section) is a
//! valid configuration.
//!
//! The defaults describe the standard approach scenario. Several of them
//! differ from the bare library defaults: a longer focal length, a 9 px
//! detector window, a wider and annealed kernel, lower track and speed
//! noise, regularized resampling and a pitch-marginalized likelihood.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{InitPrior, KernelSign, ProcessNoise, StateVector, WeightParams};
use crate::geometry::CameraModel;
use crate::imaging::{DetectorParams, GainBounds, SceneRenderConfig};
use crate::world::{generate_beacon_map, BeaconMap, GlideConfig, ImuNoise};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown key {key:?}; valid keys are: {}", valid.join(", "))]
    UnknownKey { key: String, valid: Vec<String> },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlideSection {
    pub start_distance_m: f64,
    pub start_altitude_m: f64,
    /// Derived from distance and altitude when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub glide_angle_deg: Option<f64>,
    pub speed_mps: f64,
    pub frame_rate_hz: f64,
    pub lateral_offset_m: f64,
    pub heading_offset_deg: f64,
}

impl Default for GlideSection {
    fn default() -> Self {
        Self {
            start_distance_m: 1000.0,
            start_altitude_m: 60.0,
            glide_angle_deg: None,
            speed_mps: 30.0,
            frame_rate_hz: 10.0,
            lateral_offset_m: 0.0,
            heading_offset_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeaconSection {
    pub count: usize,
    pub spacing_m: f64,
    pub runway_width_m: f64,
}

impl Default for BeaconSection {
    fn default() -> Self {
        Self {
            count: 16,
            spacing_m: 50.0,
            runway_width_m: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub width_px: u32,
    pub height_px: u32,
    pub fx_px: f64,
    pub fy_px: f64,
    pub cx_px: f64,
    pub cy_px: f64,
    /// Camera position in the body frame (forward, left, up).
    pub mount_x_m: f64,
    pub mount_y_m: f64,
    pub mount_z_m: f64,
    pub tilt_down_deg: f64,
}

impl Default for CameraSection {
    fn default() -> Self {
        Self {
            width_px: 640,
            height_px: 480,
            fx_px: 2000.0,
            fy_px: 2000.0,
            cx_px: 320.0,
            cy_px: 240.0,
            mount_x_m: 0.5,
            mount_y_m: 0.0,
            mount_z_m: 0.1,
            tilt_down_deg: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub beacon_power: f64,
    pub psf_sigma_px: f64,
    pub background_mean: f64,
    pub background_sigma: f64,
    pub background_corr_px: f64,
    pub clutter_rate: f64,
    pub clutter_power_min: f64,
    pub clutter_power_max: f64,
    pub saturation: f64,
}

impl Default for RenderSection {
    fn default() -> Self {
        let d = SceneRenderConfig::default();
        Self {
            beacon_power: d.beacon_power,
            psf_sigma_px: d.psf_sigma,
            background_mean: d.background_mean,
            background_sigma: d.background_sigma,
            background_corr_px: d.background_corr_px,
            clutter_rate: d.clutter_rate,
            clutter_power_min: d.clutter_power_range.0,
            clutter_power_max: d.clutter_power_range.1,
            saturation: d.saturation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExposureSection {
    /// Search the gain every frame; otherwise `gain` is used as is.
    pub auto: bool,
    pub gain: f64,
    pub gain_min: f64,
    pub gain_max: f64,
    pub max_saturated_px: usize,
}

impl Default for ExposureSection {
    fn default() -> Self {
        Self {
            auto: true,
            gain: 1.0,
            gain_min: 1e-4,
            gain_max: 1.0,
            max_saturated_px: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImuSection {
    pub yaw_sigma_deg: f64,
    pub yaw_bias_deg: f64,
    pub attitude_sigma_deg: f64,
}

impl Default for ImuSection {
    fn default() -> Self {
        Self {
            yaw_sigma_deg: 0.02,
            yaw_bias_deg: 0.0,
            attitude_sigma_deg: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub particles: usize,
    /// Centre the prior on the true initial state instead of a perturbed one.
    pub truth_init: bool,
    pub planar_sigma_m: f64,
    pub elevation_sigma_m: f64,
    pub azimuth_sigma_deg: f64,
    pub track_sigma_deg: f64,
    pub speed_sigma_frac: f64,
    pub process_yaw_sigma_deg: f64,
    pub process_track_azimuth_sigma_deg: f64,
    pub process_track_pitch_sigma_deg: f64,
    pub process_speed_sigma_mps: f64,
    pub process_position_sigma_m: f64,
    /// Kernel bandwidth for post-resampling jitter, as a fraction of the
    /// cloud's spread. Zero disables it.
    pub regularization: f64,
    /// Pitch uncertainty folded into the likelihood; zero trusts the IMU.
    pub pitch_sigma_deg: f64,
    pub kernel_p_px: f64,
    /// `P` on the first frame; see [`KernelSchedule`].
    pub kernel_p_initial_px: f64,
    /// Zero keeps `P` fixed at `kernel_p_px`.
    pub kernel_p_decay_frames: f64,
    pub kernel_q: f64,
    pub offscreen_distance_px: f64,
    /// `"-"` for `exp(−score)`, `"+"` for `exp(+score)`.
    pub kernel_sign: String,
}

impl Default for FilterSection {
    fn default() -> Self {
        let prior = InitPrior::around(StateVector::default());
        let w = WeightParams::default();
        Self {
            particles: 1000,
            truth_init: false,
            planar_sigma_m: prior.planar_sigma_m,
            elevation_sigma_m: prior.elevation_sigma_m,
            azimuth_sigma_deg: prior.azimuth_sigma_deg,
            track_sigma_deg: prior.track_sigma_deg,
            speed_sigma_frac: prior.speed_sigma_frac,
            process_yaw_sigma_deg: ProcessNoise::default().yaw_deg,
            process_track_azimuth_sigma_deg: 0.1,
            process_track_pitch_sigma_deg: 0.1,
            process_speed_sigma_mps: 0.1,
            process_position_sigma_m: 0.0,
            regularization: 0.2,
            pitch_sigma_deg: 0.05,
            kernel_p_px: 6.0,
            kernel_p_initial_px: 24.0,
            kernel_p_decay_frames: 100.0,
            kernel_q: w.q,
            offscreen_distance_px: 24.0,
            kernel_sign: "-".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub k: f64,
    pub window_px: usize,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            k: DetectorParams::default().k,
            window_px: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub bands_m: Vec<f64>,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            bands_m: vec![500.0, 100.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub glide: GlideSection,
    pub beacons: BeaconSection,
    pub camera: CameraSection,
    pub render: RenderSection,
    pub exposure: ExposureSection,
    pub imu: ImuSection,
    pub filter: FilterSection,
    pub detector: DetectorSection,
    pub metrics: MetricsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            glide: GlideSection::default(),
            beacons: BeaconSection::default(),
            camera: CameraSection::default(),
            render: RenderSection::default(),
            exposure: ExposureSection::default(),
            imu: ImuSection::default(),
            filter: FilterSection::default(),
            detector: DetectorSection::default(),
            metrics: MetricsSection::default(),
        }
    }
}

/// Components built from a validated [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub glide: GlideConfig,
    pub beacons: BeaconMap,
    pub camera: CameraModel,
    pub render: SceneRenderConfig,
    pub gain_bounds: GainBounds,
    pub imu: ImuNoise,
    pub process_noise: ProcessNoise,
    pub weights: WeightParams,
    pub kernel: KernelSchedule,
    pub detector: DetectorParams,
}

/// Kernel width that starts at `initial_p_px` and relaxes exponentially
/// toward `target.p_px` with time constant `decay_frames`. The offscreen
/// distance scales along with `P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSchedule {
    pub target: WeightParams,
    pub initial_p_px: f64,
    pub decay_frames: f64,
}

impl KernelSchedule {
    pub fn at_frame(&self, k: usize) -> WeightParams {
        if self.decay_frames == 0.0 {
            return self.target;
        }
        let p = self.target.p_px;
        let pk = p + (self.initial_p_px - p) * (-(k as f64) / self.decay_frames).exp();
        self.target.scaled(pk / p)
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Every settable dotted key, e.g. `filter.particles`.
    pub fn valid_keys() -> Vec<String> {
        let table = toml::Table::try_from(RunConfig::default()).expect("config serializes");
        let mut keys = Vec::new();
        for (k, v) in &table {
            match v {
                toml::Value::Table(section) => keys.extend(section.keys().map(|s| format!("{k}.{s}"))),
                _ => keys.push(k.clone()),
            }
        }
        keys.push("glide.glide_angle_deg".into());
        keys.sort();
        keys
    }

    pub fn kernel_sign(&self) -> Result<KernelSign, ConfigError> {
        match self.filter.kernel_sign.trim() {
            "-" | "-1" | "negative" => Ok(KernelSign::Negative),
            "+" | "+1" | "1" | "positive" => Ok(KernelSign::Positive),
            other => Err(invalid("filter.kernel_sign", format!("expected \"+\" or \"-\", got {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.resolve().map(|_| ())
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let g = &self.glide;
        let derived = g.start_altitude_m.atan2(g.start_distance_m).to_degrees();
        let glide = GlideConfig {
            start_distance: g.start_distance_m,
            start_altitude: g.start_altitude_m,
            glide_angle_deg: g.glide_angle_deg.unwrap_or(derived),
            speed: g.speed_mps,
            frame_rate: g.frame_rate_hz,
            lateral_offset: g.lateral_offset_m,
            heading_offset_deg: g.heading_offset_deg,
        };
        glide.validate().map_err(|e| invalid("glide", e.to_string()))?;

        let b = &self.beacons;
        let beacons =
            generate_beacon_map(b.count, b.spacing_m, b.runway_width_m).map_err(|e| invalid("beacons", e.to_string()))?;

        let c = &self.camera;
        let mount = CameraModel::forward_mount(Vector3::new(c.mount_x_m, c.mount_y_m, c.mount_z_m), c.tilt_down_deg);
        let camera = CameraModel::new(c.fx_px, c.fy_px, c.cx_px, c.cy_px, c.width_px, c.height_px, mount)
            .map_err(|e| invalid("camera", e.to_string()))?;

        let r = &self.render;
        let render = SceneRenderConfig {
            beacon_power: r.beacon_power,
            psf_sigma: r.psf_sigma_px,
            background_mean: r.background_mean,
            background_sigma: r.background_sigma,
            background_corr_px: r.background_corr_px,
            clutter_rate: r.clutter_rate,
            clutter_power_range: (r.clutter_power_min, r.clutter_power_max),
            saturation: r.saturation,
        };
        render.validate().map_err(|e| invalid("render", e.to_string()))?;
        if !(1.0..=255.0).contains(&r.saturation) {
            return Err(invalid("render.saturation", "must be within [1, 255] for 8-bit frames"));
        }

        let e = &self.exposure;
        let gain_bounds = GainBounds::new(e.gain_min, e.gain_max).map_err(|x| invalid("exposure", x.to_string()))?;
        if !(e.gain > 0.0 && e.gain.is_finite()) {
            return Err(invalid("exposure.gain", format!("must be > 0, got {}", e.gain)));
        }

        let i = &self.imu;
        let imu = ImuNoise {
            yaw_sigma_deg: i.yaw_sigma_deg,
            yaw_bias_deg: i.yaw_bias_deg,
            attitude_sigma_deg: i.attitude_sigma_deg,
        };
        for (key, v) in [("imu.yaw_sigma_deg", i.yaw_sigma_deg), ("imu.attitude_sigma_deg", i.attitude_sigma_deg)] {
            non_negative(key, v)?;
        }
        if !i.yaw_bias_deg.is_finite() {
            return Err(invalid("imu.yaw_bias_deg", "must be finite"));
        }

        let f = &self.filter;
        if f.particles == 0 {
            return Err(invalid("filter.particles", "must be >= 1"));
        }
        for (key, v) in [
            ("filter.planar_sigma_m", f.planar_sigma_m),
            ("filter.elevation_sigma_m", f.elevation_sigma_m),
            ("filter.azimuth_sigma_deg", f.azimuth_sigma_deg),
            ("filter.track_sigma_deg", f.track_sigma_deg),
            ("filter.speed_sigma_frac", f.speed_sigma_frac),
            ("filter.process_yaw_sigma_deg", f.process_yaw_sigma_deg),
            ("filter.process_track_azimuth_sigma_deg", f.process_track_azimuth_sigma_deg),
            ("filter.process_track_pitch_sigma_deg", f.process_track_pitch_sigma_deg),
            ("filter.process_speed_sigma_mps", f.process_speed_sigma_mps),
            ("filter.process_position_sigma_m", f.process_position_sigma_m),
            ("filter.regularization", f.regularization),
            ("filter.pitch_sigma_deg", f.pitch_sigma_deg),
        ] {
            non_negative(key, v)?;
        }
        let process_noise = ProcessNoise {
            yaw_deg: f.process_yaw_sigma_deg,
            track_azimuth_deg: f.process_track_azimuth_sigma_deg,
            track_pitch_deg: f.process_track_pitch_sigma_deg,
            speed_mps: f.process_speed_sigma_mps,
            position_m: f.process_position_sigma_m,
        };
        let weights = WeightParams {
            p_px: f.kernel_p_px,
            q: f.kernel_q,
            offscreen_distance_px: f.offscreen_distance_px,
            sign: self.kernel_sign()?,
            pitch_sigma_deg: f.pitch_sigma_deg,
        };
        let diagonal = (c.width_px as f64).hypot(c.height_px as f64);
        weights.validate(diagonal).map_err(|e| invalid("filter", e.to_string()))?;
        non_negative("filter.kernel_p_decay_frames", f.kernel_p_decay_frames)?;
        let kernel = KernelSchedule {
            target: weights,
            initial_p_px: f.kernel_p_initial_px,
            decay_frames: f.kernel_p_decay_frames,
        };
        if kernel.decay_frames > 0.0 {
            weights
                .scaled(f.kernel_p_initial_px / f.kernel_p_px)
                .validate(diagonal)
                .map_err(|e| invalid("filter.kernel_p_initial_px", e.to_string()))?;
        }

        let detector = DetectorParams {
            k: self.detector.k,
            window: self.detector.window_px,
        };
        detector.validate().map_err(|e| invalid("detector", e.to_string()))?;

        let bands = &self.metrics.bands_m;
        if bands.is_empty() {
            return Err(invalid("metrics.bands_m", "needs at least one band"));
        }
        if bands.iter().any(|d| !(*d > 0.0 && d.is_finite())) || bands.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("metrics.bands_m", "must be positive and strictly descending"));
        }

        Ok(Resolved {
            glide,
            beacons,
            camera,
            render,
            gain_bounds,
            imu,
            process_noise,
            weights,
            kernel,
            detector,
        })
    }
}

fn non_negative(key: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be >= 0, got {v}")))
    }
}

/// Sets a dotted key (`section.name` or `seed`) in a parsed config table.
/// The text value is converted to the type of the key's default.
pub fn set_key(table: &mut toml::Table, key: &str, value: &str) -> Result<(), ConfigError> {
    let valid = RunConfig::valid_keys();
    if !valid.iter().any(|k| k == key) {
        return Err(ConfigError::UnknownKey {
            key: key.to_string(),
            valid,
        });
    }
    let defaults = toml::Table::try_from(RunConfig::default()).expect("config serializes");
    let (section, name) = match key.split_once('.') {
        Some((s, n)) => (Some(s), n),
        None => (None, key),
    };
    let template = match section {
        Some(s) => defaults.get(s).and_then(|t| t.get(name)),
        None => defaults.get(name),
    };
    let parsed = typed_value(template, value).ok_or_else(|| invalid(key, format!("cannot use {value:?} here")))?;
    let target = match section {
        Some(s) => table
            .entry(s)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| invalid(s, "expected a table"))?,
        None => table,
    };
    target.insert(name.to_string(), parsed);
    Ok(())
}

fn typed_value(template: Option<&toml::Value>, text: &str) -> Option<toml::Value> {
    let t = text.trim();
    match template {
        Some(toml::Value::Integer(_)) => t.parse::<i64>().ok().map(toml::Value::Integer),
        Some(toml::Value::Boolean(_)) => t.parse::<bool>().ok().map(toml::Value::Boolean),
        Some(toml::Value::String(_)) => Some(toml::Value::String(t.to_string())),
        Some(toml::Value::Array(_)) => {
            let items: Option<Vec<_>> = t
                .split(';')
                .map(|x| x.trim().parse::<f64>().ok().map(toml::Value::Float))
                .collect();
            items.map(toml::Value::Array)
        }
        // Floats, plus keys without a default such as the glide angle.
        _ => t.parse::<f64>().ok().map(toml::Value::Float),
    }
}
