//! Coordinate frames, the pinhole camera and the ground-plane homography.
//!
//! Frame conventions used throughout the crate:
//!
//! * World: X along the runway centerline in the landing direction, Y to the
//!   left, Z up. The origin sits on the runway threshold midway between the
//!   two beacon lines, so the approach happens at negative X.
//! * UAV body: X forward, Y left, Z up.
//! * Camera: x right, y down, z along the optical axis.
//!
//! Attitude is `R = Rz(yaw) * Ry(pitch) * Rx(roll)` (intrinsic yaw, then
//! pitch, then roll). Every elementary rotation follows the right-hand rule,
//! so with the body Y axis pointing left a positive pitch lowers the nose.
//!
//! Pixel `(i, j)` covers `[i, i + 1) x [j, j + 1)` and has its center at
//! `(i + 0.5, j + 0.5)`; the pixel nearest to a sub-pixel point is therefore
//! `(floor(u), floor(v))`.

use nalgebra::{Matrix3, Matrix4, Rotation3, SMatrix, Vector3};
use thiserror::Error;

use crate::filter::StateVector;
use crate::world::{BeaconMap, ImuSample};

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation is not orthonormal with determinant +1 (deviation {deviation:e})")]
    NotARotation { deviation: f64 },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("camera center at height {height_m} m is not above the ground plane")]
    DegeneratePose { height_m: f64 },
}

/// Rigid transform mapping points of a child frame into its parent frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose3 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let deviation = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max()
            .max((rotation.determinant() - 1.0).abs());
        if !deviation.is_finite() || deviation > ORTHONORMAL_TOL || !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NotARotation { deviation });
        }
        Ok(Self { rotation, translation })
    }

    /// Pose from yaw/pitch/roll in degrees (see the module docs for the convention).
    pub fn from_euler_deg(yaw: f64, pitch: f64, roll: f64, translation: Vector3<f64>) -> Self {
        Self {
            rotation: euler_rotation_deg(yaw, pitch, roll),
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self ∘ other`: first apply `other`, then `self`.
    pub fn compose(&self, other: &Pose3) -> Pose3 {
        Pose3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose3 {
        let rt = self.rotation.transpose();
        Pose3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Homogeneous 4×4 form.
    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `(yaw, pitch, roll)` in degrees, inverse of [`Pose3::from_euler_deg`].
    pub fn euler_deg(&self) -> (f64, f64, f64) {
        let (roll, pitch, yaw) = Rotation3::from_matrix_unchecked(self.rotation).euler_angles();
        (yaw.to_degrees(), pitch.to_degrees(), roll.to_degrees())
    }
}

pub fn euler_rotation_deg(yaw: f64, pitch: f64, roll: f64) -> Matrix3<f64> {
    Rotation3::from_euler_angles(roll.to_radians(), pitch.to_radians(), yaw.to_radians()).into_inner()
}

/// Pinhole camera with its mount on the UAV. No lens distortion.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    mount: Pose3,
    exposure_gain: f64,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        mount: Pose3,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(GeometryError::InvalidCamera(format!("focal lengths must be positive, got fx={fx}, fy={fy}")));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidCamera("image size must be nonzero".into()));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(GeometryError::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            mount,
            exposure_gain: 1.0,
        })
    }

    pub fn with_exposure_gain(mut self, gain: f64) -> Result<Self, GeometryError> {
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(GeometryError::InvalidCamera(format!("exposure gain must be > 0, got {gain}")));
        }
        self.exposure_gain = gain;
        Ok(self)
    }

    /// Mount for a forward-looking camera at `position` (UAV frame), tilted
    /// down by `tilt_down_deg`.
    pub fn forward_mount(position: Vector3<f64>, tilt_down_deg: f64) -> Pose3 {
        // columns: camera x (right), y (down), z (optical axis) in body FLU axes
        let base = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
        Pose3 {
            rotation: euler_rotation_deg(0.0, tilt_down_deg, 0.0) * base,
            translation: position,
        }
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn mount(&self) -> &Pose3 {
        &self.mount
    }
    pub fn exposure_gain(&self) -> f64 {
        self.exposure_gain
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        (0.0..self.width as f64).contains(&u) && (0.0..self.height as f64).contains(&v)
    }
}

/// Projective map from ground-plane coordinates `(x, y, 1)` to image
/// homogeneous coordinates.
///
/// For any camera above the ground the matrix built by [`make_homography`]
/// has a negative determinant. The sign is recorded at construction so that
/// the depth test in [`Homography::project`] gives the same answer for `H`
/// and `cH` with any `c != 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    h: Matrix3<f64>,
    depth_sign: f64,
}

impl Homography {
    pub fn from_matrix(h: Matrix3<f64>) -> Self {
        let depth_sign = if h.determinant() > 0.0 { -1.0 } else { 1.0 };
        Self { h, depth_sign }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.h
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_matrix(self.h * c)
    }

    /// Normalized image coordinates of a ground point, or `None` when the
    /// point lies on or behind the camera plane.
    #[inline]
    pub fn project(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let h = &self.h;
        let w = h[(2, 0)] * x + h[(2, 1)] * y + h[(2, 2)];
        if w * self.depth_sign <= 0.0 {
            return None;
        }
        let u = (h[(0, 0)] * x + h[(0, 1)] * y + h[(0, 2)]) / w;
        let v = (h[(1, 0)] * x + h[(1, 1)] * y + h[(1, 2)]) / w;
        Some((u, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
    /// In front of the camera and inside the image bounds.
    pub visible: bool,
}

/// The per-frame constant part of the homography, `K × Σ × RT_cam⁻¹`, where
/// `Σ = [I₃ | 0]` drops the homogeneous row.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionPrefix {
    m: SMatrix<f64, 3, 4>,
    mount: Pose3,
}

impl ProjectionPrefix {
    pub fn new(camera: &CameraModel) -> Self {
        let selector = SMatrix::<f64, 3, 4>::new(
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0,
        );
        let m = camera.intrinsics() * selector * camera.mount.inverse().to_matrix();
        Self {
            m,
            mount: camera.mount,
        }
    }

    /// World-frame height of the camera center for a given UAV pose.
    pub fn camera_height(&self, uav_pose: &Pose3) -> f64 {
        uav_pose.transform_point(&self.mount.translation).z
    }

    /// `prefix × RT_uav⁻¹ × Λ`, with `Λ` lifting `(x, y, 1)` to `(x, y, 0, 1)`.
    pub fn homography(&self, uav_pose: &Pose3) -> Result<Homography, GeometryError> {
        let height_m = self.camera_height(uav_pose);
        if !(height_m > 0.0) {
            return Err(GeometryError::DegeneratePose { height_m });
        }
        Ok(self.homography_unchecked(uav_pose))
    }

    #[inline]
    pub(crate) fn homography_unchecked(&self, uav_pose: &Pose3) -> Homography {
        let lifter = SMatrix::<f64, 4, 3>::new(
            1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, //
            0.0, 0.0, 1.0,
        );
        Homography::from_matrix(self.m * uav_pose.inverse().to_matrix() * lifter)
    }
}

/// Ground-plane homography for a UAV pose: `H = K × Σ × RT_cam⁻¹ × RT_uav⁻¹ × Λ`.
pub fn make_homography(camera: &CameraModel, uav_pose: &Pose3) -> Result<Homography, GeometryError> {
    ProjectionPrefix::new(camera).homography(uav_pose)
}

/// Projects every beacon, in beacon order.
pub fn project_beacons(h: &Homography, beacons: &BeaconMap, camera: &CameraModel) -> Vec<ImagePoint> {
    beacons
        .positions()
        .iter()
        .map(|p| match h.project(p.x, p.y) {
            Some((u, v)) => ImagePoint {
                u,
                v,
                visible: camera.contains(u, v),
            },
            None => ImagePoint {
                u: f64::NAN,
                v: f64::NAN,
                visible: false,
            },
        })
        .collect()
}

/// UAV pose from a filter state: translation and yaw from the state, pitch
/// and roll from the IMU.
pub fn pose_from_state(state: &StateVector, imu: &ImuSample) -> Pose3 {
    Pose3::from_euler_deg(state.yaw_deg, imu.pitch_deg, imu.roll_deg, state.position)
}
