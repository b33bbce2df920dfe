//! Fixtures shared by the benchmarks: one frame of the standard approach
//! scenario, rendered and exposed the same way the simulation loop does it.

use irbeacon_core::filter::init_particles;
use irbeacon_core::harness::config::Resolved;
use irbeacon_core::harness::sim::truth_state;
use irbeacon_core::harness::RunConfig;
use irbeacon_core::rng::StreamRng;
use irbeacon_core::{
    detect_light_sources, distance_transform, generate_glide_trajectory, DistanceMap, GrayImage, ImuSample, InitPrior,
    ParticleSet, SceneLayers, SeedStream,
};

pub struct FrameFixture {
    pub config: RunConfig,
    pub parts: Resolved,
    pub image: GrayImage,
    pub distance: DistanceMap,
    pub imu: ImuSample,
    pub particles: ParticleSet,
    pub rng: StreamRng,
}

impl FrameFixture {
    /// Frame `index` of the default scenario, with the default particle
    /// count spread around the true state.
    pub fn standard(index: usize) -> Self {
        let config = RunConfig::default();
        let parts = config.resolve().expect("default config is valid");
        let truth = generate_glide_trajectory(&parts.glide).expect("default glide is valid");
        let rec = &truth[index.min(truth.len() - 1)];
        let seeds = SeedStream::new(config.seed);

        let layers = SceneLayers::render(&parts.camera, &rec.pose, &parts.beacons, &parts.render, seeds.derive_seed("bench", 0))
            .expect("frame renders");
        let gain = layers.auto_exposure(config.exposure.max_saturated_px, parts.gain_bounds).unwrap_or(parts.gain_bounds.lo);
        let image = layers.expose(gain);
        let (sources, _) = detect_light_sources(&image, &parts.detector).expect("detector runs");
        let distance = distance_transform(&sources);

        let imu = ImuSample { t: rec.t, roll_deg: rec.roll_deg, pitch_deg: rec.pitch_deg, yaw_deg: rec.yaw_deg };
        let mut prior = InitPrior::around(truth_state(rec));
        prior.planar_sigma_m = 5.0;
        prior.elevation_sigma_m = 1.0;
        let mut rng = seeds.rng("bench-particles", 0);
        let particles = init_particles(&prior, config.filter.particles, &mut rng).expect("prior is valid");

        Self { config, parts, image, distance, imu, particles, rng }
    }
}
