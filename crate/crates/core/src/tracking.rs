//! Per-agent multi-object tracking with a constant-velocity Kalman filter.
//!
//! State is `[x, y, z, vx, vy, vz]` in the world frame. Measurements observe
//! position only. Each tick follows the same pattern:
//!
//! 1. [`Tracker::begin_tick`] predicts every live track forward.
//! 2. [`Tracker::ingest`] (any number of times) associates a batch of
//!    detections, updates matched tracks and spawns tentative tracks from the
//!    leftovers.
//! 3. [`Tracker::end_tick`] applies the lifecycle: misses, M-of-N
//!    confirmation, death and scoring.

use std::collections::BTreeSet;

use nalgebra::{Matrix3x6, Matrix6, Matrix6x3, SymmetricEigen, Vector6};
use serde::{Deserialize, Serialize};

use crate::association::{mahalanobis_cost, solve_assignment, AssignmentProblem, AssignmentResult, DEFAULT_GATE};
use crate::error::{Error, Result};
use crate::geometry::{ClassLabel, Mat3, Vec3};
use crate::sensing::Detection;

pub type StateVector = Vector6<f64>;
pub type StateCovariance = Matrix6<f64>;

/// Minimum eigenvalue for a covariance to count as positive definite.
pub const SPD_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianEstimate {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

pub fn symmetrize(p: &StateCovariance) -> StateCovariance {
    (p + p.transpose()) * 0.5
}

pub fn min_eigenvalue(p: &StateCovariance) -> f64 {
    SymmetricEigen::new(symmetrize(p)).eigenvalues.min()
}

impl GaussianEstimate {
    /// Symmetrizes the covariance.
    pub fn new(mean: StateVector, covariance: StateCovariance) -> Self {
        GaussianEstimate {
            mean,
            covariance: symmetrize(&covariance),
        }
    }

    pub fn new_unchecked(mean: StateVector, covariance: StateCovariance) -> Self {
        GaussianEstimate { mean, covariance }
    }

    pub fn from_position(position: Vec3, position_cov: &Mat3, velocity_variance: f64) -> Self {
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<3>(0).copy_from(&position);
        let mut cov = StateCovariance::zeros();
        cov.fixed_view_mut::<3, 3>(0, 0).copy_from(position_cov);
        cov.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Mat3::identity() * velocity_variance));
        GaussianEstimate::new(mean, cov)
    }

    pub fn position_vec(&self) -> Vec3 {
        self.mean.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vec3 {
        self.mean.fixed_rows::<3>(3).into_owned()
    }

    pub fn position_trace(&self) -> f64 {
        self.covariance.fixed_view::<3, 3>(0, 0).trace()
    }

    pub fn is_spd(&self) -> bool {
        (self.covariance - self.covariance.transpose()).amax() <= 1e-9
            && min_eigenvalue(&self.covariance) > SPD_EPSILON
    }

    /// Normalized estimation error squared against a true state.
    pub fn nees(&self, truth: &StateVector) -> Result<f64> {
        let chol = nalgebra::Cholesky::new(symmetrize(&self.covariance)).ok_or(Error::SingularCovariance)?;
        let e = self.mean - truth;
        Ok(e.dot(&chol.solve(&e)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: u64,
    pub estimate: GaussianEstimate,
    pub class_label: ClassLabel,
    pub hits: u32,
    pub age: u32,
    pub misses: u32,
    pub status: TrackStatus,
    pub score: f64,
    /// Bit `k` set when the track was hit `k` ticks ago.
    #[serde(skip)]
    pub hit_window: u32,
    #[serde(skip)]
    pub hit_this_tick: bool,
    /// Agents whose data has entered this estimate.
    #[serde(skip)]
    pub contributors: BTreeSet<String>,
}

impl Track {
    pub fn is_confirmed(&self) -> bool {
        self.status == TrackStatus::Confirmed
    }

    pub fn is_alive(&self) -> bool {
        self.status != TrackStatus::Dead
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    /// White-acceleration intensity, m²/s³.
    #[serde(default = "default_q")]
    pub process_noise: f64,
    #[serde(default = "default_gate")]
    pub gate: f64,
    #[serde(default = "default_m")]
    pub confirm_hits: u32,
    #[serde(default = "default_n")]
    pub confirm_window: u32,
    #[serde(default = "default_max_misses")]
    pub max_misses: u32,
    /// Velocity variance of newborn tracks, m²/s².
    #[serde(default = "default_velocity_variance")]
    pub birth_velocity_variance: f64,
}

fn default_q() -> f64 {
    1.0
}
fn default_gate() -> f64 {
    DEFAULT_GATE
}
fn default_m() -> u32 {
    3
}
fn default_n() -> u32 {
    5
}
fn default_max_misses() -> u32 {
    3
}
fn default_velocity_variance() -> f64 {
    100.0
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            process_noise: default_q(),
            gate: default_gate(),
            confirm_hits: default_m(),
            confirm_window: default_n(),
            max_misses: default_max_misses(),
            birth_velocity_variance: default_velocity_variance(),
        }
    }
}

pub fn transition(dt: f64) -> StateCovariance {
    let mut f = StateCovariance::identity();
    for i in 0..3 {
        f[(i, i + 3)] = dt;
    }
    f
}

/// Discretized continuous white-noise-acceleration covariance.
pub fn process_noise(dt: f64, q: f64) -> StateCovariance {
    let mut m = StateCovariance::zeros();
    for i in 0..3 {
        m[(i, i)] = q * dt.powi(3) / 3.0;
        m[(i, i + 3)] = q * dt.powi(2) / 2.0;
        m[(i + 3, i)] = q * dt.powi(2) / 2.0;
        m[(i + 3, i + 3)] = q * dt;
    }
    m
}

fn measurement_matrix() -> Matrix3x6<f64> {
    let mut h = Matrix3x6::zeros();
    for i in 0..3 {
        h[(i, i)] = 1.0;
    }
    h
}

pub fn predict_estimate(est: &GaussianEstimate, dt: f64, q: f64) -> GaussianEstimate {
    let f = transition(dt);
    GaussianEstimate::new(f * est.mean, f * est.covariance * f.transpose() + process_noise(dt, q))
}

/// Kalman update with a position measurement; Joseph-form covariance.
pub fn update_estimate(est: &GaussianEstimate, z: &Vec3, r: &Mat3) -> Result<GaussianEstimate> {
    let h = measurement_matrix();
    let p = &est.covariance;
    let s = h * p * h.transpose() + r;
    let s = (s + s.transpose()) * 0.5;
    let min_eig = s.symmetric_eigenvalues().min();
    if !(min_eig > SPD_EPSILON) {
        return Err(Error::SingularInnovation { min_eigenvalue: min_eig });
    }
    let s_inv = s.try_inverse().ok_or(Error::SingularInnovation { min_eigenvalue: min_eig })?;
    let k: Matrix6x3<f64> = p * h.transpose() * s_inv;
    let innovation = z - h * est.mean;
    let mean = est.mean + k * innovation;
    let ikh = StateCovariance::identity() - k * h;
    let cov = ikh * p * ikh.transpose() + k * r * k.transpose();
    Ok(GaussianEstimate::new(mean, cov))
}

pub fn predict(t: &Track, dt: f64, q: f64) -> Track {
    Track {
        estimate: predict_estimate(&t.estimate, dt, q),
        ..t.clone()
    }
}

pub fn update(t: &Track, z: &Detection) -> Result<Track> {
    let estimate = update_estimate(&t.estimate, &z.position, &z.covariance)?;
    let mut out = t.clone();
    out.estimate = estimate;
    out.hits += 1;
    out.misses = 0;
    out.hit_this_tick = true;
    out.contributors.insert(z.agent_id.clone());
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Tracker {
    pub owner: String,
    pub config: TrackerConfig,
    pub tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(owner: impl Into<String>, config: TrackerConfig) -> Self {
        Tracker {
            owner: owner.into(),
            config,
            tracks: Vec::new(),
            next_id: 0,
        }
    }

    pub fn confirmed(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.is_confirmed())
    }

    pub fn next_track_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn begin_tick(&mut self, dt: f64) {
        let q = self.config.process_noise;
        for t in &mut self.tracks {
            t.estimate = predict_estimate(&t.estimate, dt, q);
            t.hit_this_tick = false;
        }
    }

    /// Gated Mahalanobis problem between live tracks (rows) and detections (cols).
    /// Class mismatches and singular pairs are forbidden.
    pub fn association_problem(&self, detections: &[Detection]) -> AssignmentProblem {
        AssignmentProblem::from_fn(self.tracks.len(), detections.len(), self.config.gate, |i, j| {
            let t = &self.tracks[i];
            let d = &detections[j];
            if t.class_label != d.class_label {
                return f64::INFINITY;
            }
            mahalanobis_cost(&t.estimate, d).unwrap_or(f64::INFINITY)
        })
    }

    pub fn associate(&self, detections: &[Detection]) -> AssignmentResult {
        solve_assignment(&self.association_problem(detections))
    }

    pub fn spawn(&mut self, estimate: GaussianEstimate, class_label: ClassLabel, status: TrackStatus, contributors: BTreeSet<String>) -> u64 {
        let track_id = self.next_track_id();
        self.tracks.push(Track {
            track_id,
            estimate,
            class_label,
            hits: 1,
            age: 0,
            misses: 0,
            status,
            score: 1.0,
            hit_window: 0,
            hit_this_tick: true,
            contributors,
        });
        track_id
    }

    /// Updates associated pairs and spawns tentative tracks from unassigned detections.
    pub fn apply(&mut self, detections: &[Detection], assoc: &AssignmentResult) -> Result<()> {
        for &(i, j) in &assoc.pairs {
            self.tracks[i] = update(&self.tracks[i], &detections[j])?;
        }
        for &j in &assoc.unassigned_cols {
            let d = &detections[j];
            let est = GaussianEstimate::from_position(d.position, &d.covariance, self.config.birth_velocity_variance);
            self.spawn(est, d.class_label, TrackStatus::Tentative, [d.agent_id.clone()].into());
        }
        Ok(())
    }

    pub fn ingest(&mut self, detections: &[Detection]) -> Result<()> {
        let assoc = self.associate(detections);
        self.apply(detections, &assoc)
    }

    /// Lifecycle bookkeeping; returns the tracks that died this tick.
    pub fn end_tick(&mut self) -> Vec<Track> {
        let cfg = self.config;
        let window_mask = if cfg.confirm_window >= 32 {
            u32::MAX
        } else {
            (1u32 << cfg.confirm_window) - 1
        };
        for t in &mut self.tracks {
            t.age += 1;
            t.hit_window = ((t.hit_window << 1) | u32::from(t.hit_this_tick)) & window_mask;
            if !t.hit_this_tick {
                t.misses += 1;
            }
            if t.status == TrackStatus::Tentative && t.hit_window.count_ones() >= cfg.confirm_hits {
                t.status = TrackStatus::Confirmed;
            }
            let stale_tentative = t.status == TrackStatus::Tentative && t.age >= cfg.confirm_window;
            if t.misses >= cfg.max_misses || stale_tentative {
                t.status = TrackStatus::Dead;
            }
            t.score = (f64::from(t.hits) / f64::from(t.age)).clamp(0.0, 1.0);
        }
        let (alive, dead): (Vec<Track>, Vec<Track>) = std::mem::take(&mut self.tracks).into_iter().partition(Track::is_alive);
        self.tracks = alive;
        dead
    }

    /// Applies a precomputed association and closes the tick.
    pub fn step(&mut self, detections: &[Detection], assoc: &AssignmentResult) -> Result<Vec<Track>> {
        self.apply(detections, assoc)?;
        Ok(self.end_tick())
    }

    /// Convenience: predict, associate, update and close the tick.
    pub fn process(&mut self, detections: &[Detection], dt: f64) -> Result<Vec<Track>> {
        self.begin_tick(dt);
        self.ingest(detections)?;
        Ok(self.end_tick())
    }
}
