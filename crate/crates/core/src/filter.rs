//! Particle filter over the UAV state `(T̄, γ, θ, φ, s)`.
//!
//! * `T̄`: world position, meters
//! * `γ`: yaw (azimuth of the nose), degrees
//! * `θ`, `φ`: azimuth and pitch of the direction of travel, degrees; `φ > 0`
//!   means descending
//! * `s`: speed, meters per second
//!
//! Roll and pitch of the airframe are not part of the state; the
//! measurement model takes them from the IMU.
//!
//! # Measurement kernel
//!
//! Each beacon projected by a hypothesis reads the distance map at the pixel
//! containing the projection (`d_i`), or is charged
//! [`WeightParams::offscreen_distance_px`] when it falls outside the image or
//! behind the camera. The hypothesis score is `Σ d_i / (d_i + P)^q` and its
//! weight is multiplied by `exp(−score)` (or `exp(+score)` with
//! [`KernelSign::Positive`]).
//!
//! The per-beacon penalty `d / (d + P)^q` grows with `d` up to the turnover
//! point `d* = P / (q − 1)` when `q > 1` and decreases past it; for `q ≤ 1`
//! it is increasing for all `d ≥ 0` (bounded by 1 when `q = 1`).

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::{pose_from_state, CameraModel, ProjectionPrefix};
use crate::imaging::DistanceMap;
use crate::world::{BeaconMap, ImuSample};
use crate::wrap_deg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("invalid filter parameter: {0}")]
    InvalidParameter(String),
    #[error("every particle weight vanished; weights were reset to uniform")]
    AllZeroWeights,
    #[error("distance map is {map_w}x{map_h} but the camera produces {cam_w}x{cam_h}")]
    DimensionMismatch {
        map_w: usize,
        map_h: usize,
        cam_w: usize,
        cam_h: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    pub position: Vector3<f64>,
    pub yaw_deg: f64,
    pub track_azimuth_deg: f64,
    pub track_pitch_deg: f64,
    pub speed: f64,
}

impl Default for StateVector {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            yaw_deg: 0.0,
            track_azimuth_deg: 0.0,
            track_pitch_deg: 0.0,
            speed: 0.0,
        }
    }
}

impl StateVector {
    /// Angles wrapped to (−180°, 180°], speed clamped at zero.
    pub fn normalized(self) -> Self {
        Self {
            yaw_deg: wrap_deg(self.yaw_deg),
            track_azimuth_deg: wrap_deg(self.track_azimuth_deg),
            track_pitch_deg: wrap_deg(self.track_pitch_deg),
            speed: self.speed.max(0.0),
            ..self
        }
    }

    /// Unit forward vector turned by the track azimuth and pitch.
    pub fn direction(&self) -> Vector3<f64> {
        let (sa, ca) = self.track_azimuth_deg.to_radians().sin_cos();
        let (sp, cp) = self.track_pitch_deg.to_radians().sin_cos();
        Vector3::new(ca * cp, sa * cp, -sp)
    }
}

/// Prior from the navigation system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitPrior {
    pub mean: StateVector,
    pub planar_sigma_m: f64,
    pub elevation_sigma_m: f64,
    pub azimuth_sigma_deg: f64,
    /// Spread of both track angles.
    pub track_sigma_deg: f64,
    /// Speed spread as a fraction of the mean speed.
    pub speed_sigma_frac: f64,
}

impl InitPrior {
    /// Default navigation-grade uncertainty around `mean`.
    pub fn around(mean: StateVector) -> Self {
        Self {
            mean,
            planar_sigma_m: 100.0,
            elevation_sigma_m: 10.0,
            azimuth_sigma_deg: 3.0,
            track_sigma_deg: 1.0,
            speed_sigma_frac: 0.05,
        }
    }

    /// Every particle exactly at `mean`.
    pub fn exact(mean: StateVector) -> Self {
        Self {
            mean,
            planar_sigma_m: 0.0,
            elevation_sigma_m: 0.0,
            azimuth_sigma_deg: 0.0,
            track_sigma_deg: 0.0,
            speed_sigma_frac: 0.0,
        }
    }
}

/// Per-step Gaussian process noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessNoise {
    pub yaw_deg: f64,
    pub track_azimuth_deg: f64,
    pub track_pitch_deg: f64,
    pub speed_mps: f64,
    /// Extra jitter added to each position axis after the motion step.
    /// Zero keeps the motion purely kinematic.
    pub position_m: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self {
            yaw_deg: 0.2,
            track_azimuth_deg: 0.3,
            track_pitch_deg: 0.3,
            speed_mps: 0.3,
            position_m: 0.0,
        }
    }
}

impl ProcessNoise {
    pub fn zero() -> Self {
        Self {
            yaw_deg: 0.0,
            track_azimuth_deg: 0.0,
            track_pitch_deg: 0.0,
            speed_mps: 0.0,
            position_m: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelSign {
    /// `exp(−score)`: a perfect match gets the largest weight.
    Negative,
    /// `exp(+score)`, which favours large distances; kept for comparison studies.
    Positive,
}

impl KernelSign {
    pub fn factor(self) -> f64 {
        match self {
            KernelSign::Negative => -1.0,
            KernelSign::Positive => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams {
    pub p_px: f64,
    pub q: f64,
    pub offscreen_distance_px: f64,
    pub sign: KernelSign,
    /// Standard deviation of the IMU pitch reading. When positive, each
    /// hypothesis's likelihood is averaged over that pitch error with a
    /// three-point Gauss-Hermite rule instead of trusting the reading.
    pub pitch_sigma_deg: f64,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self {
            p_px: 4.0,
            q: 1.0,
            offscreen_distance_px: 16.0,
            sign: KernelSign::Negative,
            pitch_sigma_deg: 0.0,
        }
    }
}

impl WeightParams {
    pub fn validate(&self, max_dist: f64) -> Result<(), FilterError> {
        if !(self.p_px > 0.0 && self.p_px.is_finite()) {
            return Err(FilterError::InvalidParameter(format!("P must be > 0, got {}", self.p_px)));
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(FilterError::InvalidParameter(format!("q must be > 0, got {}", self.q)));
        }
        if !(self.offscreen_distance_px > 0.0 && self.offscreen_distance_px <= max_dist) {
            return Err(FilterError::InvalidParameter(format!(
                "offscreen distance must be in (0, {max_dist}], got {}",
                self.offscreen_distance_px
            )));
        }
        if !(self.pitch_sigma_deg >= 0.0 && self.pitch_sigma_deg.is_finite()) {
            return Err(FilterError::InvalidParameter(format!(
                "pitch sigma must be >= 0, got {}",
                self.pitch_sigma_deg
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn penalty(&self, d: f64) -> f64 {
        d / (d + self.p_px).powf(self.q)
    }

    /// Distance at which the per-beacon penalty peaks, if it does.
    pub fn turnover(&self) -> Option<f64> {
        (self.q > 1.0).then(|| self.p_px / (self.q - 1.0))
    }

    /// Copy with `P` and the offscreen distance both multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            p_px: self.p_px * factor,
            offscreen_distance_px: self.offscreen_distance_px * factor,
            ..*self
        }
    }

    pub fn score(&self, distances: &[f64]) -> f64 {
        distances.iter().map(|&d| self.penalty(d)).sum()
    }

    /// Multiplicative weight update for one hypothesis.
    pub fn factor(&self, distances: &[f64]) -> f64 {
        (self.sign.factor() * self.score(distances)).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    states: Vec<StateVector>,
    weights: Vec<f64>,
}

impl ParticleSet {
    pub fn uniform(states: Vec<StateVector>) -> Result<Self, FilterError> {
        let n = states.len();
        Self::from_weighted(states, vec![1.0 / n as f64; n])
    }

    /// Weights are taken as given (not normalized).
    pub fn from_weighted(states: Vec<StateVector>, weights: Vec<f64>) -> Result<Self, FilterError> {
        if states.is_empty() {
            return Err(FilterError::InvalidParameter("particle set must not be empty".into()));
        }
        if states.len() != weights.len() {
            return Err(FilterError::InvalidParameter(format!(
                "{} states but {} weights",
                states.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(FilterError::InvalidParameter("weights must be finite and >= 0".into()));
        }
        Ok(Self { states, weights })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Effective sample size `1 / Σw²` of the normalized weights.
    pub fn ess(&self) -> f64 {
        let sum: f64 = self.weights.iter().sum();
        let sq: f64 = self.weights.iter().map(|w| (w / sum).powi(2)).sum();
        1.0 / sq
    }

    fn reset_uniform(&mut self) {
        let w = 1.0 / self.len() as f64;
        self.weights.iter_mut().for_each(|x| *x = w);
    }

    /// Motion update: IMU yaw increment plus noise on yaw, noisy track and
    /// speed, then `T̄ += R(θ, φ) · (s·dt, 0, 0)ᵀ`.
    pub fn predict<R: Rng + ?Sized>(
        &mut self,
        imu_yaw_delta_deg: f64,
        dt: f64,
        noise: &ProcessNoise,
        rng: &mut R,
    ) -> Result<(), FilterError> {
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(FilterError::InvalidParameter(format!("dt must be >= 0, got {dt}")));
        }
        let yaw_n = normal(noise.yaw_deg, "yaw noise")?;
        let az_n = normal(noise.track_azimuth_deg, "track azimuth noise")?;
        let pitch_n = normal(noise.track_pitch_deg, "track pitch noise")?;
        let speed_n = normal(noise.speed_mps, "speed noise")?;
        let jitter = normal(noise.position_m, "position noise")?;
        for s in &mut self.states {
            s.yaw_deg = wrap_deg(s.yaw_deg + imu_yaw_delta_deg + yaw_n.sample(rng));
            s.track_azimuth_deg = wrap_deg(s.track_azimuth_deg + az_n.sample(rng));
            s.track_pitch_deg = wrap_deg(s.track_pitch_deg + pitch_n.sample(rng));
            s.speed = (s.speed + speed_n.sample(rng)).max(0.0);
            if s.speed > 0.0 && dt > 0.0 {
                s.position += s.direction() * (s.speed * dt);
            }
            if noise.position_m > 0.0 {
                s.position += Vector3::new(jitter.sample(rng), jitter.sample(rng), jitter.sample(rng));
            }
        }
        Ok(())
    }

    /// Measurement update against the current frame's distance map.
    ///
    /// Returns [`FilterError::AllZeroWeights`] after resetting the weights to
    /// uniform when no particle keeps a positive weight.
    pub fn weigh(
        &mut self,
        dmap: &DistanceMap,
        camera: &CameraModel,
        imu: &ImuSample,
        beacons: &BeaconMap,
        params: &WeightParams,
    ) -> Result<(), FilterError> {
        if dmap.width() != camera.width() as usize || dmap.height() != camera.height() as usize {
            return Err(FilterError::DimensionMismatch {
                map_w: dmap.width(),
                map_h: dmap.height(),
                cam_w: camera.width() as usize,
                cam_h: camera.height() as usize,
            });
        }
        params.validate(dmap.max_dist())?;
        let prefix = ProjectionPrefix::new(camera);

        let log_w: Vec<f64> = self
            .states
            .iter()
            .zip(&self.weights)
            .map(|(s, &w)| w.ln() + log_likelihood(&prefix, s, imu, dmap, camera, beacons, params))
            .collect();

        let top = log_w.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            self.reset_uniform();
            return Err(FilterError::AllZeroWeights);
        }
        for (w, lw) in self.weights.iter_mut().zip(&log_w) {
            *w = if lw.is_finite() { (lw - top).exp() } else { 0.0 };
        }
        let sum: f64 = self.weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            self.reset_uniform();
            return Err(FilterError::AllZeroWeights);
        }
        self.weights.iter_mut().for_each(|w| *w /= sum);
        Ok(())
    }

    /// Systematic resampling, only when ESS < N/2. Returns whether it ran.
    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let n = self.len();
        if self.ess() >= n as f64 / 2.0 {
            return false;
        }
        let offset = rng.random::<f64>();
        let picks = systematic_indices(&self.weights, offset);
        self.states = picks.iter().map(|&i| self.states[i]).collect();
        self.reset_uniform();
        true
    }

    /// [`resample`](Self::resample), then, if it ran, perturbs every state
    /// component with Gaussian noise whose sigma is `bandwidth` times that
    /// component's weighted spread before resampling.
    pub fn resample_regularized<R: Rng + ?Sized>(&mut self, bandwidth: f64, rng: &mut R) -> Result<bool, FilterError> {
        if !(bandwidth >= 0.0 && bandwidth.is_finite()) {
            return Err(FilterError::InvalidParameter(format!("bandwidth must be finite and >= 0, got {bandwidth}")));
        }
        let spread = self.spread();
        if !self.resample(rng) {
            return Ok(false);
        }
        if bandwidth == 0.0 {
            return Ok(true);
        }
        let noise: Vec<Normal<f64>> = spread
            .iter()
            .map(|sd| normal(bandwidth * sd, "regularization spread"))
            .collect::<Result<_, _>>()?;
        for s in &mut self.states {
            let d: Vec<f64> = noise.iter().map(|n| n.sample(rng)).collect();
            s.position += Vector3::new(d[0], d[1], d[2]);
            s.yaw_deg = wrap_deg(s.yaw_deg + d[3]);
            s.track_azimuth_deg = wrap_deg(s.track_azimuth_deg + d[4]);
            s.track_pitch_deg += d[5];
            s.speed = (s.speed + d[6]).max(0.0);
        }
        Ok(true)
    }

    /// Weighted standard deviation of x, y, z, yaw, track azimuth, track
    /// pitch and speed. Angles use the circular deviation `sqrt(−2 ln R)`.
    fn spread(&self) -> [f64; 7] {
        let total: f64 = self.weights.iter().sum();
        let w: Vec<f64> = self.weights.iter().map(|x| x / total).collect();
        let linear = |f: &dyn Fn(&StateVector) -> f64| {
            let mean: f64 = self.states.iter().zip(&w).map(|(s, wi)| f(s) * wi).sum();
            let var: f64 = self.states.iter().zip(&w).map(|(s, wi)| (f(s) - mean).powi(2) * wi).sum();
            var.max(0.0).sqrt()
        };
        let circular = |f: &dyn Fn(&StateVector) -> f64| {
            let (_, r) = circular_mean_deg(self.states.iter().map(f), &w);
            (-2.0 * r.clamp(1e-12, 1.0).ln()).sqrt().to_degrees()
        };
        [
            linear(&|s| s.position.x),
            linear(&|s| s.position.y),
            linear(&|s| s.position.z),
            circular(&|s| s.yaw_deg),
            circular(&|s| s.track_azimuth_deg),
            linear(&|s| s.track_pitch_deg),
            linear(&|s| s.speed),
        ]
    }

    pub fn estimate(&self) -> Estimate {
        let total: f64 = self.weights.iter().sum();
        let w: Vec<f64> = self.weights.iter().map(|x| x / total).collect();

        let mut mean_pos = Vector3::zeros();
        let (mut speed, mut track_pitch) = (0.0, 0.0);
        for (s, &wi) in self.states.iter().zip(&w) {
            mean_pos += s.position * wi;
            speed += s.speed * wi;
            track_pitch += s.track_pitch_deg * wi;
        }
        let (yaw, yaw_resultant) = circular_mean_deg(self.states.iter().map(|s| s.yaw_deg), &w);
        let (track_az, _) = circular_mean_deg(self.states.iter().map(|s| s.track_azimuth_deg), &w);

        let mut cov = Matrix3::zeros();
        for (s, &wi) in self.states.iter().zip(&w) {
            let d = s.position - mean_pos;
            cov += d * d.transpose() * wi;
        }

        Estimate {
            state: StateVector {
                position: mean_pos,
                yaw_deg: yaw,
                track_azimuth_deg: track_az,
                track_pitch_deg: track_pitch,
                speed,
            },
            position_covariance: cov,
            yaw_circular_variance: (1.0 - yaw_resultant).max(0.0),
        }
    }
}

/// Weighted mean state with its spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub state: StateVector,
    pub position_covariance: Matrix3<f64>,
    /// `1 − |Σ wᵢ e^{iγᵢ}|`, in `[0, 1]`.
    pub yaw_circular_variance: f64,
}

/// Weighted circular mean (degrees, wrapped) and mean resultant length.
fn circular_mean_deg(angles: impl Iterator<Item = f64>, w: &[f64]) -> (f64, f64) {
    let (mut s, mut c) = (0.0, 0.0);
    for (a, &wi) in angles.zip(w) {
        let r = a.to_radians();
        s += wi * r.sin();
        c += wi * r.cos();
    }
    (wrap_deg(s.atan2(c).to_degrees()), s.hypot(c))
}

/// Indices chosen by systematic resampling of normalized `weights` with
/// stratum offset `offset ∈ [0, 1)`.
pub fn systematic_indices(weights: &[f64], offset: f64) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let step = total / n as f64;
    let mut picks = Vec::with_capacity(n);
    let mut cumulative = weights[0];
    let mut i = 0;
    for j in 0..n {
        let target = (offset + j as f64) * step;
        while cumulative <= target && i + 1 < n {
            i += 1;
            cumulative += weights[i];
        }
        picks.push(i);
    }
    picks
}

fn normal(sigma: f64, name: &str) -> Result<Normal<f64>, FilterError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(FilterError::InvalidParameter(format!("{name} must be >= 0, got {sigma}")));
    }
    Normal::new(0.0, sigma).map_err(|_| FilterError::InvalidParameter(format!("{name} must be >= 0, got {sigma}")))
}

/// Kernel score of one hypothesis.
fn hypothesis_score(
    prefix: &ProjectionPrefix,
    state: &StateVector,
    imu: &ImuSample,
    dmap: &DistanceMap,
    camera: &CameraModel,
    beacons: &BeaconMap,
    params: &WeightParams,
) -> f64 {
    let pose = pose_from_state(state, imu);
    let offscreen = params.penalty(params.offscreen_distance_px);
    if !(prefix.camera_height(&pose) > 0.0) {
        return offscreen * beacons.len() as f64;
    }
    let h = prefix.homography_unchecked(&pose);
    beacons
        .positions()
        .iter()
        .map(|p| match h.project(p.x, p.y) {
            Some((u, v)) if camera.contains(u, v) => params.penalty(dmap.get(u as usize, v as usize)),
            _ => offscreen,
        })
        .sum()
}

/// `ln` of the weight factor, marginalized over the IMU pitch error when
/// `params.pitch_sigma_deg > 0`.
fn log_likelihood(
    prefix: &ProjectionPrefix,
    state: &StateVector,
    imu: &ImuSample,
    dmap: &DistanceMap,
    camera: &CameraModel,
    beacons: &BeaconMap,
    params: &WeightParams,
) -> f64 {
    let sign = params.sign.factor();
    if params.pitch_sigma_deg == 0.0 {
        return sign * hypothesis_score(prefix, state, imu, dmap, camera, beacons, params);
    }
    let h = 3f64.sqrt() * params.pitch_sigma_deg;
    let terms = [(0.0, 2.0 / 3.0), (-h, 1.0 / 6.0), (h, 1.0 / 6.0)].map(|(dp, w)| {
        let shifted = ImuSample { pitch_deg: imu.pitch_deg + dp, ..*imu };
        f64::ln(w) + sign * hypothesis_score(prefix, state, &shifted, dmap, camera, beacons, params)
    });
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

/// Kernel score `Σ d_i / (d_i + P)^q` of a single hypothesis.
pub fn score_hypothesis(
    state: &StateVector,
    imu: &ImuSample,
    dmap: &DistanceMap,
    camera: &CameraModel,
    beacons: &BeaconMap,
    params: &WeightParams,
) -> f64 {
    hypothesis_score(&ProjectionPrefix::new(camera), state, imu, dmap, camera, beacons, params)
}

/// Sampling from the prior.
pub fn init_particles<R: Rng + ?Sized>(prior: &InitPrior, n: usize, rng: &mut R) -> Result<ParticleSet, FilterError> {
    if n == 0 {
        return Err(FilterError::InvalidParameter("particle count must be >= 1".into()));
    }
    let m = prior.mean;
    let planar = normal(prior.planar_sigma_m, "planar sigma")?;
    let elevation = normal(prior.elevation_sigma_m, "elevation sigma")?;
    let azimuth = normal(prior.azimuth_sigma_deg, "azimuth sigma")?;
    let track = normal(prior.track_sigma_deg, "track sigma")?;
    let speed = normal(prior.speed_sigma_frac * m.speed.abs(), "speed sigma fraction")?;
    let states = (0..n)
        .map(|_| {
            StateVector {
                position: m.position
                    + Vector3::new(planar.sample(rng), planar.sample(rng), elevation.sample(rng)),
                yaw_deg: m.yaw_deg + azimuth.sample(rng),
                track_azimuth_deg: m.track_azimuth_deg + track.sample(rng),
                track_pitch_deg: m.track_pitch_deg + track.sample(rng),
                speed: m.speed + speed.sample(rng),
            }
            .normalized()
        })
        .collect();
    ParticleSet::uniform(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use approx::assert_relative_eq;

    fn state(x: f64, yaw: f64) -> StateVector {
        StateVector {
            position: Vector3::new(x, 0.0, 10.0),
            yaw_deg: yaw,
            track_azimuth_deg: 0.0,
            track_pitch_deg: 3.0,
            speed: 30.0,
        }
    }

    #[test]
    fn zero_sigma_prior_is_exact() {
        let mean = state(-500.0, 2.0);
        let ps = init_particles(&InitPrior::exact(mean), 10, &mut SeedStream::new(1).rng("init", 0)).unwrap();
        assert!(ps.states().iter().all(|s| *s == mean));
        assert!(ps.weights().iter().all(|&w| w == 0.1));
    }

    #[test]
    fn default_prior_sigmas() {
        let p = InitPrior::around(StateVector::default());
        assert_eq!((p.planar_sigma_m, p.elevation_sigma_m, p.azimuth_sigma_deg), (100.0, 10.0, 3.0));
    }

    #[test]
    fn prior_sample_means_converge() {
        let mean = state(-1000.0, 10.0);
        let prior = InitPrior::around(mean);
        let n = 2000;
        for seed in 0..5 {
            let ps = init_particles(&prior, n, &mut SeedStream::new(seed).rng("init", 0)).unwrap();
            let k = n as f64;
            let mx = ps.states().iter().map(|s| s.position.x).sum::<f64>() / k;
            let my = ps.states().iter().map(|s| s.position.y).sum::<f64>() / k;
            let mz = ps.states().iter().map(|s| s.position.z).sum::<f64>() / k;
            let myaw = ps.states().iter().map(|s| s.yaw_deg).sum::<f64>() / k;
            assert!((mx - mean.position.x).abs() < 3.0 * 100.0 / k.sqrt());
            assert!((my - mean.position.y).abs() < 3.0 * 100.0 / k.sqrt());
            assert!((mz - mean.position.z).abs() < 3.0 * 10.0 / k.sqrt());
            assert!((myaw - 10.0).abs() < 3.0 * 3.0 / k.sqrt());
        }
    }

    #[test]
    fn init_rejects_bad_input() {
        let mut rng = SeedStream::new(1).rng("init", 0);
        assert!(init_particles(&InitPrior::exact(state(0.0, 0.0)), 0, &mut rng).is_err());
        let bad = InitPrior { planar_sigma_m: -1.0, ..InitPrior::around(state(0.0, 0.0)) };
        assert!(init_particles(&bad, 5, &mut rng).is_err());
    }

    #[test]
    fn predict_straight_and_level() {
        let s = StateVector { track_pitch_deg: 0.0, ..state(0.0, 0.0) };
        let mut ps = ParticleSet::uniform(vec![s]).unwrap();
        ps.predict(0.0, 0.1, &ProcessNoise::zero(), &mut SeedStream::new(1).rng("p", 0)).unwrap();
        let p = ps.states()[0].position;
        assert_relative_eq!(p, Vector3::new(3.0, 0.0, 10.0), epsilon = 1e-12);
    }

    #[test]
    fn predict_zero_speed_keeps_position() {
        let s = StateVector { speed: 0.0, track_azimuth_deg: 37.0, ..state(5.0, 0.0) };
        let mut ps = ParticleSet::uniform(vec![s; 3]).unwrap();
        ps.predict(1.5, 0.1, &ProcessNoise::zero(), &mut SeedStream::new(1).rng("p", 0)).unwrap();
        assert!(ps.states().iter().all(|p| p.position == s.position));
        assert!(ps.states().iter().all(|p| (p.yaw_deg - 1.5).abs() < 1e-12));
    }

    #[test]
    fn predict_zero_dt_is_identity() {
        let before = ParticleSet::uniform(vec![state(1.0, 2.0), state(3.0, -4.0)]).unwrap();
        let mut ps = before.clone();
        ps.predict(0.0, 0.0, &ProcessNoise::zero(), &mut SeedStream::new(1).rng("p", 0)).unwrap();
        assert_eq!(ps, before);
        assert!(ps.predict(0.0, -1.0, &ProcessNoise::zero(), &mut SeedStream::new(1).rng("p", 0)).is_err());
    }

    #[test]
    fn predict_wraps_and_clamps() {
        let s = StateVector { yaw_deg: 179.0, speed: 0.01, ..state(0.0, 0.0) };
        let mut ps = ParticleSet::uniform(vec![s; 200]).unwrap();
        let noise = ProcessNoise { speed_mps: 1.0, ..ProcessNoise::zero() };
        ps.predict(3.0, 0.1, &noise, &mut SeedStream::new(4).rng("p", 0)).unwrap();
        assert!(ps.states().iter().all(|p| p.speed >= 0.0));
        assert!(ps.states().iter().all(|p| (p.yaw_deg + 178.0).abs() < 1e-9));
    }

    #[test]
    fn kernel_values() {
        let wp = WeightParams { p_px: 1.0, q: 1.0, ..WeightParams::default() };
        assert_relative_eq!(wp.factor(&[3.0]), (-0.75f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(wp.factor(&[3.0]), 0.4723665527410147, epsilon = 1e-12);
        assert_eq!(wp.factor(&[0.0; 16]), 1.0);
        assert_eq!(WeightParams::default().turnover(), None);
        let wp = WeightParams { p_px: 4.0, q: 2.0, ..WeightParams::default() };
        assert_eq!(wp.turnover(), Some(4.0));
        let positive = WeightParams { sign: KernelSign::Positive, ..WeightParams::default() };
        assert!(positive.factor(&[3.0]) > 1.0);
    }

    #[test]
    fn weight_param_validation() {
        let ok = WeightParams::default();
        assert!(ok.validate(800.0).is_ok());
        assert!(WeightParams { p_px: 0.0, ..ok }.validate(800.0).is_err());
        assert!(WeightParams { q: -1.0, ..ok }.validate(800.0).is_err());
        assert!(WeightParams { offscreen_distance_px: 0.0, ..ok }.validate(800.0).is_err());
        assert!(WeightParams { offscreen_distance_px: 900.0, ..ok }.validate(800.0).is_err());
    }

    #[test]
    fn uniform_weights_skip_resampling() {
        let mut ps = ParticleSet::uniform((0..10).map(|i| state(i as f64, 0.0)).collect()).unwrap();
        let before = ps.clone();
        assert!((ps.ess() - 10.0).abs() < 1e-9);
        assert!(!ps.resample(&mut SeedStream::new(1).rng("r", 0)));
        assert_eq!(ps, before);
    }

    #[test]
    fn degenerate_weights_copy_one_particle() {
        let states: Vec<_> = (0..8).map(|i| state(i as f64, 0.0)).collect();
        let mut w = vec![0.0; 8];
        w[5] = 1.0;
        let mut ps = ParticleSet::from_weighted(states.clone(), w).unwrap();
        assert!(ps.resample(&mut SeedStream::new(2).rng("r", 0)));
        assert!(ps.states().iter().all(|s| *s == states[5]));
        assert_eq!(ps.len(), 8);
        assert!((ps.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn systematic_edges() {
        assert_eq!(systematic_indices(&[0.5, 0.5], 0.0), vec![0, 1]);
        assert_eq!(systematic_indices(&[0.25, 0.25, 0.5], 0.999), vec![1, 2, 2]);
        assert_eq!(systematic_indices(&[0.0, 0.0, 1.0], 0.0), vec![2, 2, 2]);
    }

    #[test]
    fn estimate_of_identical_particles() {
        let s = state(-42.0, 17.0);
        let ps = ParticleSet::uniform(vec![s; 6]).unwrap();
        let e = ps.estimate();
        assert_relative_eq!(e.state.position, s.position, epsilon = 1e-12);
        assert_relative_eq!(e.state.yaw_deg, 17.0, epsilon = 1e-12);
        assert_relative_eq!(e.state.speed, 30.0, epsilon = 1e-12);
        assert!(e.position_covariance.abs().max() < 1e-20);
        assert!(e.yaw_circular_variance < 1e-12);
    }

    #[test]
    fn yaw_mean_wraps() {
        let ps = ParticleSet::uniform(vec![state(0.0, 179.0), state(0.0, -179.0)]).unwrap();
        let e = ps.estimate();
        assert_relative_eq!(e.state.yaw_deg.abs(), 180.0, epsilon = 1e-9);
        assert_eq!(e.state.yaw_deg, 180.0, "wrapped into (-180, 180]");
    }

    #[test]
    fn weighted_position_mean_matches_direct_sum() {
        let states: Vec<_> = (0..5).map(|i| state(i as f64 * 7.0 - 3.0, 0.0)).collect();
        let w = vec![0.1, 0.2, 0.3, 0.15, 0.25];
        let ps = ParticleSet::from_weighted(states.clone(), w.clone()).unwrap();
        let direct: f64 = states.iter().zip(&w).map(|(s, wi)| s.position.x * wi).sum();
        assert_relative_eq!(ps.estimate().state.position.x, direct, epsilon = 1e-12);
    }

    #[test]
    fn bad_sets() {
        assert!(ParticleSet::uniform(vec![]).is_err());
        assert!(ParticleSet::from_weighted(vec![state(0.0, 0.0)], vec![-1.0]).is_err());
        assert!(ParticleSet::from_weighted(vec![state(0.0, 0.0)], vec![]).is_err());
    }

    fn peaked_set(n: usize) -> ParticleSet {
        let states: Vec<_> = (0..n).map(|i| state(-50.0 + 100.0 * i as f64 / n as f64, 0.0)).collect();
        let w = states.iter().map(|s| (-(s.position.x / 5.0).powi(2) / 2.0).exp()).collect();
        ParticleSet::from_weighted(states, w).unwrap()
    }

    #[test]
    fn zero_bandwidth_is_plain_resampling() {
        let (mut a, mut b) = (peaked_set(500), peaked_set(500));
        assert!(a.resample(&mut SeedStream::new(3).rng("r", 0)));
        assert!(b.resample_regularized(0.0, &mut SeedStream::new(3).rng("r", 0)).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn regularization_inflates_spread_by_bandwidth() {
        let mut ps = peaked_set(8000);
        let h = 0.5;
        assert!(ps.resample_regularized(h, &mut SeedStream::new(4).rng("r", 0)).unwrap());
        let n = ps.len() as f64;
        let mean = ps.states().iter().map(|s| s.position.x).sum::<f64>() / n;
        let var = ps.states().iter().map(|s| (s.position.x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.3, "{mean}");
        let expected = 25.0 * (1.0 + h * h);
        assert!((var / expected - 1.0).abs() < 0.1, "{var} vs {expected}");
        // Components with no spread stay put, up to rounding in the spread.
        assert!(ps.states().iter().all(|s| s.position.y.abs() < 1e-6 && (s.speed - 30.0).abs() < 1e-6));
    }

    #[test]
    fn regularization_skips_when_ess_is_high() {
        let mut ps = ParticleSet::uniform((0..10).map(|i| state(i as f64, 0.0)).collect()).unwrap();
        let before = ps.clone();
        assert!(!ps.resample_regularized(0.5, &mut SeedStream::new(5).rng("r", 0)).unwrap());
        assert_eq!(ps, before);
        assert!(ps.resample_regularized(-0.1, &mut SeedStream::new(5).rng("r", 0)).is_err());
        assert!(ps.resample_regularized(f64::NAN, &mut SeedStream::new(5).rng("r", 0)).is_err());
    }

    #[test]
    fn pitch_marginal_lies_between_node_scores() {
        use crate::imaging::{distance_transform, BinaryMap};
        use crate::world::generate_beacon_map;

        let camera = CameraModel::new(800.0, 800.0, 320.0, 240.0, 640, 480, CameraModel::forward_mount(Vector3::zeros(), 2.0))
            .unwrap();
        let beacons = generate_beacon_map(16, 50.0, 40.0).unwrap();
        let mut bits = BinaryMap::empty(640, 480);
        for (x, y) in [(300, 250), (340, 252), (310, 246), (330, 247), (100, 400)] {
            bits.set(x, y, true);
        }
        let dmap = distance_transform(&bits);
        let s = StateVector {
            position: Vector3::new(-400.0, 1.0, 25.0),
            ..state(0.0, 0.5)
        };
        let imu = ImuSample { t: 0.0, roll_deg: 0.0, pitch_deg: 3.0, yaw_deg: 0.0 };
        let prefix = ProjectionPrefix::new(&camera);

        let plain = WeightParams::default();
        let exact = log_likelihood(&prefix, &s, &imu, &dmap, &camera, &beacons, &plain);
        assert_eq!(exact, -score_hypothesis(&s, &imu, &dmap, &camera, &beacons, &plain));

        let sigma = 0.4;
        let marg = WeightParams { pitch_sigma_deg: sigma, ..plain };
        let node_scores: Vec<f64> = [-1.0, 0.0, 1.0]
            .iter()
            .map(|k| {
                let shifted = ImuSample { pitch_deg: 3.0 + k * 3f64.sqrt() * sigma, ..imu };
                score_hypothesis(&s, &shifted, &dmap, &camera, &beacons, &plain)
            })
            .collect();
        let ll = log_likelihood(&prefix, &s, &imu, &dmap, &camera, &beacons, &marg);
        let (lo, hi) = node_scores.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(-hi - 1e-12 <= ll && ll <= -lo + 1e-12, "{ll} not in [{}, {}]", -hi, -lo);
        let direct = (2.0 / 3.0 * (-node_scores[1]).exp() + (-node_scores[0]).exp() / 6.0 + (-node_scores[2]).exp() / 6.0).ln();
        assert_relative_eq!(ll, direct, epsilon = 1e-12);
    }

    #[test]
    fn scaled_params() {
        let w = WeightParams::default().scaled(2.5);
        assert_eq!((w.p_px, w.offscreen_distance_px, w.q), (10.0, 40.0, 1.0));
    }
}
