//! Closed-loop simulation: render, expose, detect, track, log.

use std::time::Instant;

use nalgebra::Vector3;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use super::config::{ConfigError, Resolved, RunConfig};
use super::log::{LogRecord, TrajectoryLog};
use crate::filter::{init_particles, FilterError, InitPrior, StateVector};
use crate::imaging::{
    detect_light_sources, distance_transform, BinaryMap, DistanceMap, GrayImage, ImagingError,
    SceneLayers,
};
use crate::rng::SeedStream;
use crate::world::{generate_glide_trajectory, synthesize_imu, TruthRecord, WorldError};
use crate::wrap_deg;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Images produced while processing one frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameView<'a> {
    pub index: usize,
    pub gain: f64,
    pub image: &'a GrayImage,
    pub sources: &'a BinaryMap,
    pub distance: &'a DistanceMap,
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub log: TrajectoryLog,
    /// Frames where every particle weight vanished and the filter reset.
    pub divergent_frames: Vec<usize>,
    /// Exposure gain used on each frame.
    pub gains: Vec<f64>,
}

impl SimulationOutcome {
    pub fn diverged(&self) -> bool {
        !self.divergent_frames.is_empty()
    }
}

pub fn run_simulation(cfg: &RunConfig) -> Result<SimulationOutcome, SimulationError> {
    run_simulation_with(cfg, |_| {})
}

/// Initial truth state as the filter parameterizes it.
pub fn truth_state(rec: &TruthRecord) -> StateVector {
    StateVector {
        position: *rec.position(),
        yaw_deg: rec.yaw_deg,
        track_azimuth_deg: rec.track_azimuth_deg,
        track_pitch_deg: rec.track_pitch_deg,
        speed: rec.speed,
    }
}

/// Runs the whole approach, calling `observe` after each frame's distance
/// transform.
pub fn run_simulation_with<F>(cfg: &RunConfig, mut observe: F) -> Result<SimulationOutcome, SimulationError>
where
    F: FnMut(&FrameView),
{
    let parts: Resolved = cfg.resolve()?;
    let seeds = SeedStream::new(cfg.seed);

    let truth = generate_glide_trajectory(&parts.glide)?;
    let imu = synthesize_imu(&truth, &parts.imu, &mut seeds.rng("imu", 0))?;

    let f = &cfg.filter;
    let start = truth_state(&truth[0]);
    let mean = if f.truth_init {
        start
    } else {
        let mut rng = seeds.rng("prior", 0);
        let planar = Normal::new(0.0, f.planar_sigma_m).expect("validated");
        let elevation = Normal::new(0.0, f.elevation_sigma_m).expect("validated");
        let azimuth = Normal::new(0.0, f.azimuth_sigma_deg).expect("validated");
        let offset = Vector3::new(planar.sample(&mut rng), planar.sample(&mut rng), elevation.sample(&mut rng));
        StateVector {
            position: start.position + offset,
            yaw_deg: wrap_deg(start.yaw_deg + azimuth.sample(&mut rng)),
            ..start
        }
    };
    let prior = InitPrior {
        mean,
        planar_sigma_m: f.planar_sigma_m,
        elevation_sigma_m: f.elevation_sigma_m,
        azimuth_sigma_deg: f.azimuth_sigma_deg,
        track_sigma_deg: f.track_sigma_deg,
        speed_sigma_frac: f.speed_sigma_frac,
    };
    let mut particles = init_particles(&prior, f.particles, &mut seeds.rng("init", 0))?;
    let mut predict_rng = seeds.rng("predict", 0);
    let mut resample_rng = seeds.rng("resample", 0);

    let mut log = TrajectoryLog::default();
    let mut divergent_frames = Vec::new();
    let mut gains = Vec::with_capacity(truth.len());

    for (k, rec) in truth.iter().enumerate() {
        let layers = SceneLayers::render(
            &parts.camera,
            &rec.pose,
            &parts.beacons,
            &parts.render,
            seeds.derive_seed("render", k as u64),
        )?;
        let gain = if cfg.exposure.auto {
            match layers.auto_exposure(cfg.exposure.max_saturated_px, parts.gain_bounds) {
                Ok(g) => g,
                // Nothing in range satisfies the limit: take the darkest setting.
                Err(ImagingError::NoFeasibleGain { gain, .. }) => gain,
                Err(e) => return Err(e.into()),
            }
        } else {
            cfg.exposure.gain
        };
        gains.push(gain);
        let image = layers.expose(gain);

        let clock = Instant::now();
        let (sources, _) = detect_light_sources(&image, &parts.detector)?;
        let distance = distance_transform(&sources);
        if k > 0 {
            let dt = rec.t - truth[k - 1].t;
            let yaw_delta = wrap_deg(imu[k].yaw_deg - imu[k - 1].yaw_deg);
            particles.predict(yaw_delta, dt, &parts.process_noise, &mut predict_rng)?;
        }
        let weights = parts.kernel.at_frame(k);
        match particles.weigh(&distance, &parts.camera, &imu[k], &parts.beacons, &weights) {
            Ok(()) => {}
            Err(FilterError::AllZeroWeights) => divergent_frames.push(k),
            Err(e) => return Err(e.into()),
        }
        let ess = particles.ess();
        let est = particles.estimate();
        particles.resample_regularized(f.regularization, &mut resample_rng)?;
        let frame_ms = clock.elapsed().as_secs_f64() * 1e3;

        observe(&FrameView {
            index: k,
            gain,
            image: &image,
            sources: &sources,
            distance: &distance,
        });

        let truth_pos = rec.position();
        let est_pos = est.state.position;
        log.records.push(LogRecord {
            t_s: rec.t,
            truth_position: [truth_pos.x, truth_pos.y, truth_pos.z],
            truth_yaw_deg: rec.yaw_deg,
            est_position: [est_pos.x, est_pos.y, est_pos.z],
            est_yaw_deg: est.state.yaw_deg,
            err_pos_m: (est_pos - truth_pos).norm(),
            err_yaw_deg: wrap_deg(est.state.yaw_deg - rec.yaw_deg).abs(),
            ess,
            frame_ms,
        });
    }

    Ok(SimulationOutcome {
        log,
        divergent_frames,
        gains,
    })
}
