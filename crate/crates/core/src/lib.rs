//! Vision-aided landing tracker for a fixed-wing UAV approaching a runway
//! marked with infrared beacons.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: poses, the pinhole camera and the ground-plane homography
//! * [`world`]: beacon layouts, the glide trajectory and IMU synthesis
//! * [`imaging`]: frame rendering, auto exposure, light source detection and
//!   the distance transform
//! * [`filter`]: the particle filter
//! * [`harness`]: configuration, the simulation loop, logs and metrics

pub mod filter;
pub mod geometry;
pub mod harness;
pub mod imaging;
pub mod rng;
pub mod world;

pub use filter::{
    init_particles, Estimate, FilterError, InitPrior, KernelSign, ParticleSet, ProcessNoise, StateVector, WeightParams,
};
pub use geometry::{make_homography, project_beacons, CameraModel, GeometryError, Homography, ImagePoint, Pose3};
pub use imaging::{
    auto_exposure, detect_light_sources, distance_transform, BinaryMap, DetectorParams, DistanceMap, GainBounds,
    GrayImage, ImagingError, SceneLayers, SceneRenderConfig,
};
pub use rng::SeedStream;
pub use world::{
    generate_beacon_map, generate_glide_trajectory, synthesize_imu, BeaconMap, GlideConfig, ImuNoise, ImuSample,
    TruthRecord,
};

/// Wraps an angle in degrees to (−180, 180].
pub fn wrap_deg(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}
