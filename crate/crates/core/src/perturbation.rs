//! Blind-spot drift and domain-randomization draws.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rotation_from_axis_angle, RigidTransform, SigmaPointSet, Vec3, SIGMA_COUNT};
use crate::tasklogic::ProprioState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbationError {
    #[error("range `{name}` is inverted ({lo} > {hi})")]
    InvertedRange { name: &'static str, lo: f64, hi: f64 },
    #[error("`{name}` must be non-negative, got {value}")]
    NegativeStd { name: &'static str, value: f64 },
}

/// Clamped random-walk offset applied uniformly to the true sigma points
/// while the target is out of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftState {
    pub d: Vec3,
    /// Per control tick (m).
    pub sigma_drift: f64,
    /// Componentwise bound (m); `f64::INFINITY` disables clipping.
    pub d_max: f64,
}

impl Default for DriftState {
    fn default() -> Self {
        Self {
            d: Vec3::zeros(),
            sigma_drift: 0.01,
            d_max: 0.10,
        }
    }
}

/// Drift parameters as they appear in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub sigma_drift: f64,
    /// `null` in JSON disables clipping.
    pub d_max: Option<f64>,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            sigma_drift: 0.01,
            d_max: Some(0.10),
        }
    }
}

impl DriftConfig {
    pub fn initial_state(&self) -> DriftState {
        DriftState::new(self.sigma_drift, self.d_max.unwrap_or(f64::INFINITY))
    }
}

impl DriftState {
    pub fn new(sigma_drift: f64, d_max: f64) -> Self {
        Self {
            d: Vec3::zeros(),
            sigma_drift,
            d_max,
        }
    }

    /// Advances the walk by an explicit increment.
    pub fn advance(&self, increment: &Vec3, target_visible: bool) -> Self {
        let d = if target_visible {
            Vec3::zeros()
        } else {
            (self.d + increment).map(|c| c.clamp(-self.d_max, self.d_max))
        };
        Self { d, ..*self }
    }

    pub fn max_abs(&self) -> f64 {
        self.d.abs().max()
    }
}

/// One tick of the drift walk: reset on visibility, otherwise a clipped
/// Gaussian step.
pub fn drift_step<R: Rng + ?Sized>(state: &DriftState, rng: &mut R, target_visible: bool) -> DriftState {
    if target_visible {
        return state.advance(&Vec3::zeros(), true);
    }
    let step = if state.sigma_drift > 0.0 {
        let n = Normal::new(0.0, state.sigma_drift).expect("finite positive std");
        Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng))
    } else {
        Vec3::zeros()
    };
    state.advance(&step, false)
}

pub fn apply_drift(true_set: &SigmaPointSet, state: &DriftState) -> SigmaPointSet {
    true_set.translated(&state.d)
}

/// Closed interval serialized as `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    pub fn point(v: f64) -> Self {
        Self(v, v)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.0 == self.1 {
            self.0
        } else {
            rng.random_range(self.0..=self.1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationConfig {
    pub alpha: Interval,
    pub extrinsic_x: Interval,
    pub extrinsic_y: Interval,
    pub extrinsic_z: Interval,
    pub extrinsic_roll_deg: Interval,
    pub extrinsic_pitch_deg: Interval,
    pub extrinsic_yaw_deg: Interval,
    pub perception_delay_ms: Interval,
    pub lin_vel_noise_std: f64,
    pub ang_vel_noise_std: f64,
    pub gravity_noise_std: f64,
    pub sigma_scale_noise_std: f64,
    pub sigma_rotation_noise_std: f64,
    // Physics parameters; drawn and recorded, not simulated.
    pub friction: Interval,
    pub restitution: Interval,
    pub added_mass_kg: Interval,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self {
            alpha: Interval(1.0, 1.5),
            extrinsic_x: Interval(-0.02, 0.02),
            extrinsic_y: Interval(-0.005, 0.005),
            extrinsic_z: Interval(-0.02, 0.02),
            extrinsic_roll_deg: Interval(-0.5, 0.5),
            extrinsic_pitch_deg: Interval(-2.0, 2.0),
            extrinsic_yaw_deg: Interval(-0.5, 0.5),
            perception_delay_ms: Interval(0.0, 50.0),
            lin_vel_noise_std: 0.1,
            ang_vel_noise_std: 0.1,
            gravity_noise_std: 0.1,
            sigma_scale_noise_std: 0.1,
            sigma_rotation_noise_std: 0.1,
            friction: Interval(0.2, 5.0),
            restitution: Interval(0.0, 1.0),
            added_mass_kg: Interval(-1.0, 2.0),
        }
    }
}

impl RandomizationConfig {
    pub fn validate(&self) -> Result<(), PerturbationError> {
        let ranges = [
            ("alpha", self.alpha),
            ("extrinsic_x", self.extrinsic_x),
            ("extrinsic_y", self.extrinsic_y),
            ("extrinsic_z", self.extrinsic_z),
            ("extrinsic_roll_deg", self.extrinsic_roll_deg),
            ("extrinsic_pitch_deg", self.extrinsic_pitch_deg),
            ("extrinsic_yaw_deg", self.extrinsic_yaw_deg),
            ("perception_delay_ms", self.perception_delay_ms),
            ("friction", self.friction),
            ("restitution", self.restitution),
            ("added_mass_kg", self.added_mass_kg),
        ];
        for (name, Interval(lo, hi)) in ranges {
            if !(lo <= hi) {
                return Err(PerturbationError::InvertedRange { name, lo, hi });
            }
        }
        let stds = [
            ("lin_vel_noise_std", self.lin_vel_noise_std),
            ("ang_vel_noise_std", self.ang_vel_noise_std),
            ("gravity_noise_std", self.gravity_noise_std),
            ("sigma_scale_noise_std", self.sigma_scale_noise_std),
            ("sigma_rotation_noise_std", self.sigma_rotation_noise_std),
        ];
        for (name, value) in stds {
            if !(value >= 0.0) {
                return Err(PerturbationError::NegativeStd { name, value });
            }
        }
        Ok(())
    }
}

/// Per-episode randomization draw, kept for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationDraw {
    pub alpha: f64,
    /// Camera mounting offset translation (m).
    pub extrinsic_translation: [f64; 3],
    /// Camera mounting offset roll (about +Z), pitch (about +X), yaw (about +Y), in radians.
    pub extrinsic_rpy: [f64; 3],
    pub perception_delay_s: f64,
    pub lin_vel_noise_std: f64,
    pub ang_vel_noise_std: f64,
    pub gravity_noise_std: f64,
    pub sigma_scale_noise_std: f64,
    pub sigma_rotation_noise_std: f64,
    pub friction: f64,
    pub restitution: f64,
    pub added_mass_kg: f64,
}

impl RandomizationDraw {
    /// Mounting offset mapping the perturbed camera frame into the nominal one.
    pub fn extrinsic_offset(&self) -> RigidTransform {
        let [roll, pitch, yaw] = self.extrinsic_rpy;
        let r = rotation_from_axis_angle(&Vec3::new(0.0, yaw, 0.0))
            * rotation_from_axis_angle(&Vec3::new(pitch, 0.0, 0.0))
            * rotation_from_axis_angle(&Vec3::new(0.0, 0.0, roll));
        let t = self.extrinsic_translation;
        RigidTransform::new_unchecked(r, Vec3::new(t[0], t[1], t[2]), "camera", "camera_nominal")
    }
}

pub fn sample_randomization<R: Rng + ?Sized>(cfg: &RandomizationConfig, rng: &mut R) -> RandomizationDraw {
    let alpha = cfg.alpha.sample(rng);
    let extrinsic_translation = [
        cfg.extrinsic_x.sample(rng),
        cfg.extrinsic_y.sample(rng),
        cfg.extrinsic_z.sample(rng),
    ];
    let extrinsic_rpy = [
        cfg.extrinsic_roll_deg.sample(rng).to_radians(),
        cfg.extrinsic_pitch_deg.sample(rng).to_radians(),
        cfg.extrinsic_yaw_deg.sample(rng).to_radians(),
    ];
    let perception_delay_s = cfg.perception_delay_ms.sample(rng) / 1000.0;
    RandomizationDraw {
        alpha,
        extrinsic_translation,
        extrinsic_rpy,
        perception_delay_s,
        lin_vel_noise_std: cfg.lin_vel_noise_std,
        ang_vel_noise_std: cfg.ang_vel_noise_std,
        gravity_noise_std: cfg.gravity_noise_std,
        sigma_scale_noise_std: cfg.sigma_scale_noise_std,
        sigma_rotation_noise_std: cfg.sigma_rotation_noise_std,
        friction: cfg.friction.sample(rng),
        restitution: cfg.restitution.sample(rng),
        added_mass_kg: cfg.added_mass_kg.sample(rng),
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).expect("finite positive std").sample(rng)
    } else {
        0.0
    }
}

/// Scales the axis offsets by `1 + scale_eps` and rotates them by the
/// rotation vector `rotvec` about the centroid.
pub fn perturb_sigma_points(set: &SigmaPointSet, scale_eps: f64, rotvec: &Vec3) -> SigmaPointSet {
    let r = rotation_from_axis_angle(rotvec);
    let c = set.centroid();
    let mut points = [c; SIGMA_COUNT];
    for (out, p) in points.iter_mut().zip(set.points.iter()).skip(1) {
        *out = c + r * (p - c) * (1.0 + scale_eps);
    }
    SigmaPointSet::new(points)
}

/// Draws scale and rotation noise from `draw` and applies it.
pub fn sample_sigma_noise<R: Rng + ?Sized>(
    set: &SigmaPointSet,
    draw: &RandomizationDraw,
    rng: &mut R,
) -> SigmaPointSet {
    let eps = gaussian(rng, draw.sigma_scale_noise_std);
    let s = draw.sigma_rotation_noise_std;
    let rotvec = Vec3::new(gaussian(rng, s), gaussian(rng, s), gaussian(rng, s));
    perturb_sigma_points(set, eps, &rotvec)
}

/// Adds proprioceptive noise; projected gravity is re-normalized.
pub fn noisy_proprio<R: Rng + ?Sized>(
    proprio: &ProprioState,
    draw: &RandomizationDraw,
    rng: &mut R,
) -> ProprioState {
    let mut out = proprio.clone();
    for i in 0..3 {
        out.lin_vel[i] += gaussian(rng, draw.lin_vel_noise_std);
        out.ang_vel[i] += gaussian(rng, draw.ang_vel_noise_std);
        out.gravity_proj[i] += gaussian(rng, draw.gravity_noise_std);
    }
    let n = out.gravity_proj.norm();
    if n > 0.0 {
        out.gravity_proj /= n;
    } else {
        out.gravity_proj = proprio.gravity_proj;
    }
    out
}
