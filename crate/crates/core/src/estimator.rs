//! Bank of seven constant-velocity Kalman filters living in the current
//! camera frame.
//!
//! Each control tick runs two transitions per track: a kinematic prediction
//! in the previous camera frame, then a rigid remap into the new camera frame
//! using the relative camera motion from visual odometry. Measurements are
//! sigma-point sets that may arrive late; the bank keeps a short history of
//! snapshots and replays the stored ticks after applying a late update.

use std::collections::VecDeque;

use nalgebra::{Matrix3x6, Matrix6, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    CameraModel, GeometryError, Mat3, RigidTransform, SigmaPointSet, Vec3, SIGMA_COUNT,
};

pub type Mat6 = Matrix6<f64>;
pub type Vec6 = Vector6<f64>;

/// Stamp comparisons tolerate this much accumulated rounding (s).
pub const STAMP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("time step must be non-negative, got {0}")]
    NegativeDt(f64),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("measurement covariance is not symmetric positive definite")]
    InvalidMeasurementCovariance,
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("measurement stamp {meas} is ahead of the filter stamp {current}")]
    FutureMeasurement { meas: f64, current: f64 },
    #[error("invalid filter config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, EstimatorError>;

/// How a measurement older than the current tick is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatePolicy {
    /// Roll back to the snapshot at the measurement stamp, update, replay.
    #[default]
    Replay,
    /// Update the current state directly, ignoring the measurement's age.
    InPlace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Per-tick position process variance (m²).
    pub q_pos: f64,
    /// Per-tick velocity process variance (m²/s²).
    pub q_vel: f64,
    /// Pixel standard deviations (px).
    pub sigma_u: f64,
    pub sigma_v: f64,
    /// Depth standard deviation (m).
    pub sigma_z: f64,
    pub p0_pos: f64,
    pub p0_vel: f64,
    /// Normalized innovation above which a track is re-initialized at the
    /// measurement. `None` disables the gate.
    pub innovation_gate: Option<f64>,
    /// Snapshot ring depth in control ticks.
    pub history_len: usize,
    pub late_policy: LatePolicy,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            q_pos: 1.0e-6,
            q_vel: 1.0e-5,
            sigma_u: 20.0,
            sigma_v: 20.0,
            sigma_z: 0.05,
            p0_pos: 1.0e-2,
            p0_vel: 1.0e-1,
            innovation_gate: Some(5.0),
            history_len: 30,
            late_policy: LatePolicy::Replay,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("q_pos", self.q_pos),
            ("q_vel", self.q_vel),
            ("sigma_u", self.sigma_u),
            ("sigma_v", self.sigma_v),
            ("sigma_z", self.sigma_z),
            ("p0_pos", self.p0_pos),
            ("p0_vel", self.p0_vel),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EstimatorError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(g) = self.innovation_gate {
            if !(g > 0.0) {
                return Err(EstimatorError::InvalidConfig("innovation_gate must be positive".into()));
            }
        }
        if self.history_len < 1 {
            return Err(EstimatorError::InvalidConfig("history_len must be at least 1".into()));
        }
        Ok(())
    }

    /// Oldest measurement age the snapshot ring can absorb at a fixed tick.
    pub fn history_horizon(&self, dt: f64) -> f64 {
        self.history_len.saturating_sub(1) as f64 * dt
    }

    fn process_noise(&self) -> Mat6 {
        Mat6::from_diagonal(&Vec6::new(
            self.q_pos, self.q_pos, self.q_pos, self.q_vel, self.q_vel, self.q_vel,
        ))
    }
}

/// Position and relative velocity of one sigma point in the current camera
/// frame, with its 6×6 covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub covariance: Mat6,
    pub last_stamp: f64,
}

impl TrackState {
    pub fn mean(&self) -> Vec6 {
        Vec6::new(
            self.position.x,
            self.position.y,
            self.position.z,
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
        )
    }

    fn with_mean(&self, mean: &Vec6, covariance: Mat6) -> Self {
        Self {
            position: Vec3::new(mean[0], mean[1], mean[2]),
            velocity: Vec3::new(mean[3], mean[4], mean[5]),
            covariance,
            last_stamp: self.last_stamp,
        }
    }
}

/// True when `p` is symmetric within 1e-9 and its eigenvalues are ≥ −1e-10.
pub fn covariance_is_healthy(p: &Mat6) -> bool {
    if (p - p.transpose()).abs().max() > 1e-9 {
        return false;
    }
    let sym = (p + p.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().all(|&l| l >= -1e-10)
}

fn measurement_matrix() -> Matrix3x6<f64> {
    let mut h = Matrix3x6::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&Mat3::identity());
    h
}

pub fn init_track(z: &Vec3, cfg: &FilterConfig, stamp: f64) -> TrackState {
    TrackState {
        position: *z,
        velocity: Vec3::zeros(),
        covariance: Mat6::from_diagonal(&Vec6::new(
            cfg.p0_pos, cfg.p0_pos, cfg.p0_pos, cfg.p0_vel, cfg.p0_vel, cfg.p0_vel,
        )),
        last_stamp: stamp,
    }
}

/// Constant-velocity prediction in the previous camera frame.
pub fn predict(track: &TrackState, dt: f64, cfg: &FilterConfig) -> Result<TrackState> {
    if !(dt >= 0.0) {
        return Err(EstimatorError::NegativeDt(dt));
    }
    let mut a = Mat6::identity();
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Mat3::identity() * dt));
    let covariance = a * track.covariance * a.transpose() + cfg.process_noise();
    Ok(TrackState {
        position: track.position + track.velocity * dt,
        velocity: track.velocity,
        covariance,
        last_stamp: track.last_stamp + dt,
    })
}

/// Rigid remap of a track from camera frame `C_{t-1}` into `C_t`.
pub fn compensate_ego_motion(track: &TrackState, t_rel: &RigidTransform) -> Result<TrackState> {
    t_rel.validate()?;
    let r = t_rel.rotation();
    let mut f = Mat6::zeros();
    f.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    f.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    Ok(TrackState {
        position: r * track.position + t_rel.translation(),
        velocity: r * track.velocity,
        covariance: f * track.covariance * f.transpose(),
        last_stamp: track.last_stamp,
    })
}

/// Depth-scaled measurement covariance `diag((Zσu/fx)², (Zσv/fy)², σz²)`.
pub fn measurement_covariance(cam: &CameraModel, depth_z: f64, cfg: &FilterConfig) -> Result<Mat3> {
    if !(depth_z > 0.0) {
        return Err(EstimatorError::NonPositiveDepth(depth_z));
    }
    let sx = depth_z / cam.fx * cfg.sigma_u;
    let sy = depth_z / cam.fy * cfg.sigma_v;
    Ok(Mat3::from_diagonal(&Vec3::new(sx * sx, sy * sy, cfg.sigma_z * cfg.sigma_z)))
}

fn innovation_covariance(track: &TrackState, r: &Mat3) -> Result<Mat3> {
    if (r - r.transpose()).abs().max() > 1e-12 * r.abs().max().max(1.0) || r.cholesky().is_none() {
        return Err(EstimatorError::InvalidMeasurementCovariance);
    }
    let h = measurement_matrix();
    Ok(h * track.covariance * h.transpose() + r)
}

/// Mahalanobis length of the innovation `z − Hx` under `HPHᵀ + R`.
pub fn normalized_innovation(track: &TrackState, z: &Vec3, r: &Mat3) -> Result<f64> {
    let s = innovation_covariance(track, r)?;
    let chol = s.cholesky().ok_or(EstimatorError::SingularInnovation)?;
    let y = z - track.position;
    Ok(y.dot(&chol.solve(&y)).max(0.0).sqrt())
}

/// Linear Kalman update with a Joseph-form covariance.
pub fn update(track: &TrackState, z: &Vec3, r: &Mat3, _cfg: &FilterConfig) -> Result<TrackState> {
    let s = innovation_covariance(track, r)?;
    let s_inv = s
        .cholesky()
        .ok_or(EstimatorError::SingularInnovation)?
        .inverse();
    let h = measurement_matrix();
    let p = &track.covariance;
    let k = p * h.transpose() * s_inv;
    let mean = track.mean() + k * (z - track.position);
    let i_kh = Mat6::identity() - k * h;
    let joseph = i_kh * p * i_kh.transpose() + k * r * k.transpose();
    let covariance = (joseph + joseph.transpose()) * 0.5;
    Ok(track.with_mean(&mean, covariance))
}

/// Reorders `measured` so each point lines up with its counterpart in
/// `predicted`: centroid to centroid, axes by rank, and within each axis the
/// ± assignment with the smaller summed squared distance.
pub fn associate_measurement(predicted: &SigmaPointSet, measured: &SigmaPointSet) -> SigmaPointSet {
    let mut out = *measured;
    for k in 0..3 {
        let (pp, pm) = (predicted.points[2 * k + 1], predicted.points[2 * k + 2]);
        let (mp, mm) = (measured.points[2 * k + 1], measured.points[2 * k + 2]);
        let keep = (mp - pp).norm_squared() + (mm - pm).norm_squared();
        let swap = (mm - pp).norm_squared() + (mp - pm).norm_squared();
        if swap < keep {
            out.points[2 * k + 1] = mm;
            out.points[2 * k + 2] = mp;
        }
    }
    out
}

/// Outcome of [`FilterBank::ingest_measurement`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestOutcome {
    Applied {
        /// Ticks replayed after the update.
        replayed: usize,
        /// Tracks re-initialized by the innovation gate (or all seven on
        /// first acquisition).
        reinitialized: usize,
    },
    /// Older than the snapshot history; state untouched.
    Stale,
}

#[derive(Debug, Clone)]
struct Snapshot {
    stamp: f64,
    dt: f64,
    t_rel: RigidTransform,
    tracks: Option<[TrackState; SIGMA_COUNT]>,
}

/// Seven independent tracks indexed like a [`SigmaPointSet`].
#[derive(Debug, Clone)]
pub struct FilterBank {
    config: FilterConfig,
    tracks: Option<[TrackState; SIGMA_COUNT]>,
    stamp: f64,
    history: VecDeque<Snapshot>,
}

fn step_tracks(
    tracks: &[TrackState; SIGMA_COUNT],
    dt: f64,
    t_rel: &RigidTransform,
    cfg: &FilterConfig,
) -> Result<[TrackState; SIGMA_COUNT]> {
    let mut out = *tracks;
    for t in out.iter_mut() {
        *t = compensate_ego_motion(&predict(t, dt, cfg)?, t_rel)?;
    }
    Ok(out)
}

impl FilterBank {
    pub fn new(config: FilterConfig, start_stamp: f64) -> Result<Self> {
        config.validate()?;
        let mut history = VecDeque::with_capacity(config.history_len + 1);
        history.push_back(Snapshot {
            stamp: start_stamp,
            dt: 0.0,
            t_rel: RigidTransform::identity("camera"),
            tracks: None,
        });
        Ok(Self {
            config,
            tracks: None,
            stamp: start_stamp,
            history,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn stamp(&self) -> f64 {
        self.stamp
    }

    pub fn tracks(&self) -> Option<&[TrackState; SIGMA_COUNT]> {
        self.tracks.as_ref()
    }

    pub fn is_initialized(&self) -> bool {
        self.tracks.is_some()
    }

    pub fn estimate(&self) -> Option<SigmaPointSet> {
        self.tracks
            .as_ref()
            .map(|t| SigmaPointSet::new(t.map(|tr| tr.position)))
    }

    /// Stamps of the retained snapshots, oldest first.
    pub fn history_stamps(&self) -> Vec<f64> {
        self.history.iter().map(|s| s.stamp).collect()
    }

    /// Oldest stamp a late measurement may carry.
    pub fn horizon_start(&self) -> f64 {
        self.history.front().map_or(self.stamp, |s| s.stamp)
    }

    /// Advances every track by one control tick: predict, then remap by the
    /// relative camera motion `C_{t-1} → C_t`.
    pub fn step_bank(&mut self, dt: f64, t_rel: &RigidTransform) -> Result<Option<SigmaPointSet>> {
        if !(dt >= 0.0) {
            return Err(EstimatorError::NegativeDt(dt));
        }
        t_rel.validate()?;
        if let Some(tracks) = &self.tracks {
            self.tracks = Some(step_tracks(tracks, dt, t_rel, &self.config)?);
        }
        self.stamp += dt;
        self.history.push_back(Snapshot {
            stamp: self.stamp,
            dt,
            t_rel: t_rel.clone(),
            tracks: self.tracks,
        });
        while self.history.len() > self.config.history_len {
            self.history.pop_front();
        }
        Ok(self.estimate())
    }

    fn correct(
        &self,
        tracks: Option<[TrackState; SIGMA_COUNT]>,
        measured: &SigmaPointSet,
        stamp: f64,
        cam: &CameraModel,
    ) -> Result<([TrackState; SIGMA_COUNT], usize)> {
        let cfg = &self.config;
        let Some(mut tracks) = tracks else {
            return Ok((measured.points.map(|z| init_track(&z, cfg, stamp)), SIGMA_COUNT));
        };
        let predicted = SigmaPointSet::new(tracks.map(|t| t.position));
        let assoc = associate_measurement(&predicted, measured);
        let mut reinitialized = 0;
        for (track, z) in tracks.iter_mut().zip(assoc.points.iter()) {
            let depth = track.position.z.max(cam.near_z);
            let r = measurement_covariance(cam, depth, cfg)?;
            let gated = match cfg.innovation_gate {
                Some(gate) => normalized_innovation(track, z, &r)? > gate,
                None => false,
            };
            if gated {
                *track = init_track(z, cfg, track.last_stamp);
                reinitialized += 1;
            } else {
                *track = update(track, z, &r, cfg)?;
            }
        }
        Ok((tracks, reinitialized))
    }

    /// Applies a measurement taken at `meas_stamp` (at or before the current
    /// stamp), rolling back and replaying when it is late.
    pub fn ingest_measurement(
        &mut self,
        measured: &SigmaPointSet,
        meas_stamp: f64,
        cam: &CameraModel,
    ) -> Result<IngestOutcome> {
        if meas_stamp > self.stamp + STAMP_TOLERANCE {
            return Err(EstimatorError::FutureMeasurement {
                meas: meas_stamp,
                current: self.stamp,
            });
        }
        if meas_stamp < self.horizon_start() - STAMP_TOLERANCE {
            return Ok(IngestOutcome::Stale);
        }

        if self.config.late_policy == LatePolicy::InPlace {
            let (tracks, reinitialized) = self.correct(self.tracks, measured, self.stamp, cam)?;
            self.tracks = Some(tracks);
            if let Some(last) = self.history.back_mut() {
                last.tracks = self.tracks;
            }
            return Ok(IngestOutcome::Applied { replayed: 0, reinitialized });
        }

        let idx = self
            .history
            .iter()
            .rposition(|s| s.stamp <= meas_stamp + STAMP_TOLERANCE)
            .unwrap_or(0);
        let snap = &self.history[idx];
        let (tracks, reinitialized) = self.correct(snap.tracks, measured, snap.stamp, cam)?;
        self.history[idx].tracks = Some(tracks);

        let mut current = tracks;
        for i in idx + 1..self.history.len() {
            let snap = &self.history[i];
            current = step_tracks(&current, snap.dt, &snap.t_rel, &self.config)?;
            self.history[i].tracks = Some(current);
        }
        self.tracks = Some(current);
        Ok(IngestOutcome::Applied {
            replayed: self.history.len() - 1 - idx,
            reinitialized,
        })
    }
}
