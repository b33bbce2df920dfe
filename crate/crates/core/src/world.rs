//! Beacon layout, the ground-truth glide and synthetic IMU streams.

use nalgebra::{Point2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::Pose3;
use crate::wrap_deg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("bad beacon layout: {0}")]
    BadLayout(String),
    #[error("invalid glide configuration: {0}")]
    InvalidGlide(String),
    #[error("invalid IMU model: {0}")]
    InvalidImu(String),
}

/// Ordered beacon positions on the ground plane (z = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct BeaconMap {
    positions: Vec<Point2<f64>>,
}

impl BeaconMap {
    pub fn new(positions: Vec<Point2<f64>>) -> Result<Self, WorldError> {
        if positions.len() < 4 {
            return Err(WorldError::BadLayout(format!("need at least 4 beacons, got {}", positions.len())));
        }
        if positions.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(WorldError::BadLayout("non-finite beacon position".into()));
        }
        for (i, a) in positions.iter().enumerate() {
            if positions[..i].iter().any(|b| b == a) {
                return Err(WorldError::BadLayout(format!("duplicate beacon at ({}, {})", a.x, a.y)));
            }
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[Point2<f64>] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Two straight lines of `count / 2` beacons at `x = 0, s, 2s, …`, one on
/// each side of the runway at `y = ±runway_width / 2`.
pub fn generate_beacon_map(count: usize, spacing: f64, runway_width: f64) -> Result<BeaconMap, WorldError> {
    if count < 4 || count % 2 != 0 {
        return Err(WorldError::BadLayout(format!("beacon count must be even and >= 4, got {count}")));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(WorldError::BadLayout(format!("spacing must be > 0, got {spacing}")));
    }
    if !(runway_width > 0.0 && runway_width.is_finite()) {
        return Err(WorldError::BadLayout(format!("runway width must be > 0, got {runway_width}")));
    }
    let half = runway_width / 2.0;
    let positions = (0..count / 2)
        .flat_map(|i| {
            let x = i as f64 * spacing;
            [Point2::new(x, half), Point2::new(x, -half)]
        })
        .collect();
    BeaconMap::new(positions)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlideConfig {
    /// Horizontal distance from the threshold at the first frame, meters.
    pub start_distance: f64,
    pub start_altitude: f64,
    pub glide_angle_deg: f64,
    pub speed: f64,
    pub frame_rate: f64,
    /// Initial cross-track offset (meters, +Y is left); decays to zero at touchdown.
    pub lateral_offset: f64,
    /// Initial yaw offset of the nose from the track (degrees); decays to zero at touchdown.
    pub heading_offset_deg: f64,
}

/// Allowed mismatch between `glide_angle_deg` and `atan(altitude / distance)`.
pub const GLIDE_ANGLE_TOLERANCE_DEG: f64 = 0.01;

impl GlideConfig {
    /// Glide whose angle follows from the start point.
    pub fn aimed_at_threshold(start_distance: f64, start_altitude: f64, speed: f64, frame_rate: f64) -> Self {
        Self {
            start_distance,
            start_altitude,
            glide_angle_deg: (start_altitude / start_distance).atan().to_degrees(),
            speed,
            frame_rate,
            lateral_offset: 0.0,
            heading_offset_deg: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::InvalidGlide(m));
        if !(self.start_distance > 0.0 && self.start_distance.is_finite()) {
            return bad(format!("start distance must be > 0, got {}", self.start_distance));
        }
        if !(self.start_altitude > 0.0 && self.start_altitude.is_finite()) {
            return bad(format!("start altitude must be > 0, got {}", self.start_altitude));
        }
        if !(self.glide_angle_deg > 0.0 && self.glide_angle_deg < 15.0) {
            return bad(format!("glide angle must be in (0, 15) degrees, got {}", self.glide_angle_deg));
        }
        let implied = (self.start_altitude / self.start_distance).atan().to_degrees();
        if (implied - self.glide_angle_deg).abs() > GLIDE_ANGLE_TOLERANCE_DEG {
            return bad(format!(
                "glide angle {} deg does not reach the threshold from the start point (needs {implied:.4} deg)",
                self.glide_angle_deg
            ));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return bad(format!("speed must be > 0, got {}", self.speed));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return bad(format!("frame rate must be > 0, got {}", self.frame_rate));
        }
        if !self.lateral_offset.is_finite() || !self.heading_offset_deg.is_finite() {
            return bad("offsets must be finite".into());
        }
        Ok(())
    }

    fn start_point(&self) -> Vector3<f64> {
        Vector3::new(-self.start_distance, self.lateral_offset, self.start_altitude)
    }

    /// Unit direction of travel.
    pub fn direction(&self) -> Vector3<f64> {
        (-self.start_point()).normalize()
    }

    /// `(azimuth, pitch)` of the direction of travel in degrees; pitch is
    /// positive when descending.
    pub fn track_angles_deg(&self) -> (f64, f64) {
        let d = self.direction();
        (d.y.atan2(d.x).to_degrees(), (-d.z).atan2(d.x.hypot(d.y)).to_degrees())
    }
}

/// Attitude is stored in degrees next to the pose built from it so that
/// consumers never need to re-extract Euler angles.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub t: f64,
    pub pose: Pose3,
    pub speed: f64,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
    pub track_azimuth_deg: f64,
    pub track_pitch_deg: f64,
}

impl TruthRecord {
    pub fn position(&self) -> &Vector3<f64> {
        self.pose.translation()
    }
}

/// Final altitude: the glide ends with the first sample at or below it.
pub const TOUCHDOWN_ALTITUDE_M: f64 = 0.5;

/// Straight constant-speed descent from the start point to the threshold,
/// sampled at the frame rate. The body pitch equals the track pitch and the
/// wings stay level.
pub fn generate_glide_trajectory(cfg: &GlideConfig) -> Result<Vec<TruthRecord>, WorldError> {
    cfg.validate()?;
    let start = cfg.start_point();
    let dir = cfg.direction();
    let path_len = start.norm();
    let (track_az, track_pitch) = cfg.track_angles_deg();
    let dt = 1.0 / cfg.frame_rate;

    let mut records = Vec::new();
    for i in 0u64.. {
        let t = i as f64 * dt;
        let travelled = cfg.speed * t;
        let position = start + dir * travelled;
        let remaining = ((path_len - travelled) / path_len).max(0.0);
        let yaw = wrap_deg(track_az + cfg.heading_offset_deg * remaining);
        records.push(TruthRecord {
            t,
            pose: Pose3::from_euler_deg(yaw, track_pitch, 0.0, position),
            speed: cfg.speed,
            yaw_deg: yaw,
            pitch_deg: track_pitch,
            roll_deg: 0.0,
            track_azimuth_deg: track_az,
            track_pitch_deg: track_pitch,
        });
        if position.z <= TOUCHDOWN_ALTITUDE_M {
            break;
        }
    }
    Ok(records)
}

/// Attitude reading from the IMU and magnetic sensor, degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub roll_deg: f64,
    pub pitch_deg: f64,
    pub yaw_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuNoise {
    /// Per-sample step of the yaw random walk.
    pub yaw_sigma_deg: f64,
    pub yaw_bias_deg: f64,
    /// White noise on roll and pitch.
    pub attitude_sigma_deg: f64,
}

impl ImuNoise {
    pub fn noiseless() -> Self {
        Self {
            yaw_sigma_deg: 0.0,
            yaw_bias_deg: 0.0,
            attitude_sigma_deg: 0.0,
        }
    }
}

/// One IMU sample per truth record: roll and pitch with white noise, yaw
/// with a constant bias plus a Gaussian random walk.
pub fn synthesize_imu<R: Rng + ?Sized>(
    truth: &[TruthRecord],
    noise: &ImuNoise,
    rng: &mut R,
) -> Result<Vec<ImuSample>, WorldError> {
    let sigma = |v: f64, name: &str| {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(WorldError::InvalidImu(format!("{name} must be >= 0, got {v}")));
        }
        Normal::new(0.0, v).map_err(|_| WorldError::InvalidImu(format!("{name} must be >= 0, got {v}")))
    };
    let walk_step = sigma(noise.yaw_sigma_deg, "yaw sigma")?;
    let attitude = sigma(noise.attitude_sigma_deg, "attitude sigma")?;
    if !noise.yaw_bias_deg.is_finite() {
        return Err(WorldError::InvalidImu("yaw bias must be finite".into()));
    }

    let mut walk = 0.0;
    Ok(truth
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            if i > 0 {
                walk += walk_step.sample(rng);
            }
            ImuSample {
                t: rec.t,
                roll_deg: rec.roll_deg + attitude.sample(rng),
                pitch_deg: rec.pitch_deg + attitude.sample(rng),
                yaw_deg: wrap_deg(rec.yaw_deg + noise.yaw_bias_deg + walk),
            }
        })
        .collect())
}
