//! Deterministic scenario generation, sensor emulation and episode scoring.
//!
//! The world frame shares the camera axis convention at `t = 0` (X right,
//! Y down, Z forward). Camera poses are camera-to-world transforms, as a
//! visual-odometry stream would report them.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use nalgebra::{Rotation3, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{EstimatorError, FilterBank, FilterConfig, IngestOutcome, TrackState};
use crate::geometry::{
    compute_visible_set, rotation_from_axis_angle, sigma_points_from_cloud, sigma_points_uniform,
    solid_angle_weights, transform_points, weighted_pca, extract_sigma_points, CameraModel,
    GeometryError, Mat3, RigidTransform, SigmaPointSet, SurfacePointCloud, Vec3, SIGMA_COUNT,
};
use crate::perturbation::{
    drift_step, sample_randomization, DriftConfig, PerturbationError, RandomizationConfig,
    RandomizationDraw,
};
use crate::tasklogic::{
    compute_reward, terminal_status, Action, CriteriaConfig, EndEffectorPose, ProprioState,
    RewardBreakdown, RewardConfig, TaskError, TaskGeometry, TerminalStatus,
};

pub const WORLD: &str = "world";
pub const CAMERA: &str = "camera";
pub const OBJECT: &str = "object";

/// Tolerance for deciding whether a stamp has been reached (s).
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: `{key}` {reason}")]
    InvalidConfig { key: String, reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Perturbation(#[from] PerturbationError),
    #[error(transparent)]
    Task(#[from] TaskError),
}

fn invalid(key: &str, reason: impl Into<String>) -> SimError {
    SimError::InvalidConfig {
        key: key.to_owned(),
        reason: reason.into(),
    }
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CameraMotion {
    Static,
    ConstantVelocity {
        velocity: [f64; 3],
    },
    /// Lateral sway at `frequency`, vertical bounce at twice that, pitch
    /// oscillation, superposed on a constant base velocity.
    Walking {
        #[serde(default = "default_walk_amplitude")]
        amplitude: f64,
        #[serde(default = "default_walk_frequency")]
        frequency: f64,
        #[serde(default)]
        base_velocity: [f64; 3],
        #[serde(default = "default_walk_pitch")]
        pitch_amplitude_deg: f64,
    },
    /// Yaw about the world vertical (+Y) axis at `omega` rad/s.
    Turning {
        omega: f64,
    },
}

fn default_walk_amplitude() -> f64 {
    0.05
}
fn default_walk_frequency() -> f64 {
    1.5
}
fn default_walk_pitch() -> f64 {
    2.0
}

impl CameraMotion {
    pub fn walking() -> Self {
        CameraMotion::Walking {
            amplitude: default_walk_amplitude(),
            frequency: default_walk_frequency(),
            base_velocity: [0.0; 3],
            pitch_amplitude_deg: default_walk_pitch(),
        }
    }

    /// Camera-to-world rotation and position at time `t`.
    pub fn pose_at(&self, t: f64) -> (Mat3, Vec3) {
        match *self {
            CameraMotion::Static => (Mat3::identity(), Vec3::zeros()),
            CameraMotion::ConstantVelocity { velocity } => (Mat3::identity(), Vec3::from(velocity) * t),
            CameraMotion::Walking {
                amplitude,
                frequency,
                base_velocity,
                pitch_amplitude_deg,
            } => {
                let w = TAU * frequency;
                let sway = Vec3::new(amplitude * (w * t).sin(), amplitude * (2.0 * w * t).sin(), 0.0);
                let pitch = pitch_amplitude_deg.to_radians() * (w * t).cos();
                (
                    rotation_from_axis_angle(&Vec3::new(pitch, 0.0, 0.0)),
                    Vec3::from(base_velocity) * t + sway,
                )
            }
            CameraMotion::Turning { omega } => {
                (rotation_from_axis_angle(&Vec3::new(0.0, omega * t, 0.0)), Vec3::zeros())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere { radius: f64 },
    /// Full edge lengths along the object axes.
    Box { dims: [f64; 3] },
    /// Axis along object +Z.
    Cylinder { radius: f64, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectMotion {
    Static,
    ConstantVelocity { velocity: [f64; 3] },
    /// Circle in the world X–Y plane around the configured position.
    Circular { radius: f64, angular_rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub shape: Shape,
    /// Initial position (or orbit center) in the world frame (m).
    pub position: [f64; 3],
    /// Rotation vector of the object frame (rad).
    #[serde(default)]
    pub orientation: [f64; 3],
    #[serde(default = "static_motion")]
    pub motion: ObjectMotion,
}

fn static_motion() -> ObjectMotion {
    ObjectMotion::Static
}

impl ObjectConfig {
    pub fn position_at(&self, t: f64) -> Vec3 {
        let p = Vec3::from(self.position);
        match self.motion {
            ObjectMotion::Static => p,
            ObjectMotion::ConstantVelocity { velocity } => p + Vec3::from(velocity) * t,
            ObjectMotion::Circular { radius, angular_rate } => {
                let a = angular_rate * t;
                p + Vec3::new(radius * a.cos(), radius * a.sin(), 0.0)
            }
        }
    }

    pub fn velocity_at(&self, t: f64) -> Vec3 {
        match self.motion {
            ObjectMotion::Static => Vec3::zeros(),
            ObjectMotion::ConstantVelocity { velocity } => Vec3::from(velocity),
            ObjectMotion::Circular { radius, angular_rate } => {
                let a = angular_rate * t;
                Vec3::new(-radius * a.sin(), radius * a.cos(), 0.0) * angular_rate
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelNoiseMode {
    /// One pixel/depth offset per observation shared by every mask pixel
    /// (tracker jitter).
    #[default]
    Frame,
    /// Independent noise per back-projected point.
    Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorNoise {
    pub sigma_u: f64,
    pub sigma_v: f64,
    pub sigma_z: f64,
    pub mode: PixelNoiseMode,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self {
            sigma_u: 20.0,
            sigma_v: 20.0,
            sigma_z: 0.05,
            mode: PixelNoiseMode::Frame,
        }
    }
}

impl SensorNoise {
    pub fn noiseless() -> Self {
        Self {
            sigma_u: 0.0,
            sigma_v: 0.0,
            sigma_z: 0.0,
            ..Self::default()
        }
    }
}

/// Independent per-frame perturbation of the reported camera pose.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoNoise {
    pub translation_std: f64,
    pub rotation_std: f64,
}

/// Physics parameters recorded for provenance only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsProvenance {
    pub friction: f64,
    pub restitution: f64,
    pub added_mass_kg: f64,
}

impl Default for PhysicsProvenance {
    fn default() -> Self {
        Self {
            friction: 1.0,
            restitution: 0.0,
            added_mass_kg: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Fixed sigma scale, no drift, no randomization.
    #[default]
    Deploy,
    /// Randomization draw per episode and blind-spot drift on the truth.
    Training,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    /// Episode length (s).
    pub duration: f64,
    #[serde(default = "default_control_rate")]
    pub control_rate: f64,
    #[serde(default = "default_obs_rate")]
    pub obs_rate: f64,
    #[serde(default = "default_latency")]
    pub obs_latency: f64,
    /// No observations are taken after this time (s).
    #[serde(default)]
    pub measurement_cutoff: Option<f64>,
    #[serde(default)]
    pub camera: CameraModel,
    #[serde(default = "static_camera")]
    pub camera_motion: CameraMotion,
    #[serde(default)]
    pub vo_noise: VoNoise,
    pub object: ObjectConfig,
    #[serde(default = "default_samples")]
    pub surface_samples: usize,
    #[serde(default)]
    pub sensor: SensorNoise,
    /// Sigma scale in deploy mode.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub randomization: RandomizationConfig,
    #[serde(default)]
    pub physics: PhysicsProvenance,
}

fn default_control_rate() -> f64 {
    50.0
}
fn default_obs_rate() -> f64 {
    5.0
}
fn default_latency() -> f64 {
    0.2
}
fn static_camera() -> CameraMotion {
    CameraMotion::Static
}
fn default_samples() -> usize {
    2048
}
fn default_alpha() -> f64 {
    1.0
}

impl ScenarioConfig {
    /// Minimal scenario: static camera, static box one meter ahead.
    pub fn new(duration: f64, object: ObjectConfig) -> Self {
        Self {
            seed: 0,
            duration,
            control_rate: default_control_rate(),
            obs_rate: default_obs_rate(),
            obs_latency: default_latency(),
            measurement_cutoff: None,
            camera: CameraModel::default(),
            camera_motion: CameraMotion::Static,
            vo_noise: VoNoise::default(),
            object,
            surface_samples: default_samples(),
            sensor: SensorNoise::default(),
            alpha: default_alpha(),
            randomization: RandomizationConfig::default(),
            physics: PhysicsProvenance::default(),
        }
    }

    pub fn control_period(&self) -> f64 {
        1.0 / self.control_rate
    }

    pub fn num_ticks(&self) -> usize {
        (self.duration * self.control_rate + 1e-9).floor() as usize + 1
    }

    /// Control ticks per observation.
    pub fn obs_stride(&self) -> usize {
        (self.control_rate / self.obs_rate).round() as usize
    }

    pub fn validate(&self, history_horizon: f64) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid("scenario.duration", "must be positive"));
        }
        if !(self.control_rate > 0.0) {
            return Err(invalid("scenario.control_rate", "must be positive"));
        }
        if !(self.obs_rate > 0.0 && self.obs_rate <= self.control_rate) {
            return Err(invalid("scenario.obs_rate", "must be positive and at most control_rate"));
        }
        let ratio = self.control_rate / self.obs_rate;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(invalid("scenario.obs_rate", "must divide control_rate"));
        }
        if !(self.obs_latency >= 0.0) {
            return Err(invalid("scenario.obs_latency", "must be non-negative"));
        }
        let max_delay = self.randomization.perception_delay_ms.1 / 1000.0;
        if self.obs_latency + max_delay >= history_horizon {
            return Err(invalid(
                "scenario.obs_latency",
                format!("exceeds the filter history horizon of {history_horizon} s"),
            ));
        }
        if self.surface_samples == 0 {
            return Err(invalid("scenario.surface_samples", "must be at least 1"));
        }
        if !(self.alpha > 0.0) {
            return Err(invalid("scenario.alpha", "must be positive"));
        }
        let s = &self.sensor;
        if !(s.sigma_u >= 0.0 && s.sigma_v >= 0.0 && s.sigma_z >= 0.0) {
            return Err(invalid("scenario.sensor", "noise must be non-negative"));
        }
        if !(self.vo_noise.translation_std >= 0.0 && self.vo_noise.rotation_std >= 0.0) {
            return Err(invalid("scenario.vo_noise", "noise must be non-negative"));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let shape_ok = match self.object.shape {
            Shape::Sphere { radius } => positive(radius),
            Shape::Box { dims } => dims.iter().all(|d| positive(*d)),
            Shape::Cylinder { radius, height } => positive(radius) && positive(height),
        };
        if !shape_ok {
            return Err(invalid("scenario.object.shape", "dimensions must be positive"));
        }
        self.camera
            .validate()
            .map_err(|e| invalid("scenario.camera", e.to_string()))?;
        self.randomization
            .validate()
            .map_err(|e| invalid("scenario.randomization", e.to_string()))?;
        Ok(())
    }
}

/// Independent random streams derived from the episode seed.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Surface = 0,
    Vo = 1,
    Sensor = 2,
    Drift = 3,
    Randomization = 4,
}

fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).expect("finite positive std").sample(rng)
    } else {
        0.0
    }
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(gaussian(rng, 1.0), gaussian(rng, 1.0), gaussian(rng, 1.0));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Area-uniform surface samples with outward normals, in the object frame.
pub fn sample_surface<R: Rng + ?Sized>(shape: &Shape, count: usize, rng: &mut R) -> SurfacePointCloud {
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    for _ in 0..count {
        let (p, n) = match *shape {
            Shape::Sphere { radius } => {
                let n = unit_vector(rng);
                (n * radius, n)
            }
            Shape::Box { dims } => {
                let h = Vec3::from(dims) / 2.0;
                let areas = [dims[1] * dims[2], dims[0] * dims[2], dims[0] * dims[1]];
                let total: f64 = areas.iter().sum();
                let mut u = rng.random::<f64>() * total;
                let mut axis = 2;
                for (i, a) in areas.iter().enumerate() {
                    if u < *a {
                        axis = i;
                        break;
                    }
                    u -= a;
                }
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let mut p = Vec3::zeros();
                for i in 0..3 {
                    p[i] = if i == axis { sign * h[i] } else { rng.random_range(-h[i]..=h[i]) };
                }
                let mut n = Vec3::zeros();
                n[axis] = sign;
                (p, n)
            }
            Shape::Cylinder { radius, height } => {
                let side = TAU * radius * height;
                let cap = std::f64::consts::PI * radius * radius;
                let u = rng.random::<f64>() * (side + 2.0 * cap);
                if u < side {
                    let a = rng.random::<f64>() * TAU;
                    let z = rng.random_range(-height / 2.0..=height / 2.0);
                    let n = Vec3::new(a.cos(), a.sin(), 0.0);
                    (Vec3::new(radius * a.cos(), radius * a.sin(), z), n)
                } else {
                    let sign = if u < side + cap { 1.0 } else { -1.0 };
                    let r = radius * rng.random::<f64>().sqrt();
                    let a = rng.random::<f64>() * TAU;
                    (
                        Vec3::new(r * a.cos(), r * a.sin(), sign * height / 2.0),
                        Vec3::new(0.0, 0.0, sign),
                    )
                }
            }
        };
        points.push(p);
        normals.push(n);
    }
    SurfacePointCloud {
        points,
        normals,
        frame: OBJECT.to_owned(),
    }
}

/// Sigma set of the target as the training pipeline sees it: visible
/// surface with solid-angle weights, falling back to the back-facing-culled
/// surface without the field-of-view test when nothing is in view.
fn training_truth(cloud: &SurfacePointCloud, cam: &CameraModel, alpha: f64) -> Result<Option<SigmaPointSet>> {
    if let Some(s) = sigma_points_from_cloud(cloud, cam, alpha)? {
        return Ok(Some(s));
    }
    let idx: Vec<usize> = (0..cloud.len())
        .filter(|&i| cloud.normals[i].dot(&cloud.points[i]) < 0.0)
        .collect();
    if idx.is_empty() {
        return Ok(None);
    }
    let pts: Vec<Vec3> = idx.iter().map(|&i| cloud.points[i]).collect();
    let nrm: Vec<Vec3> = idx.iter().map(|&i| cloud.normals[i]).collect();
    let w = solid_angle_weights(&pts, &nrm)?;
    if w.iter().sum::<f64>() <= 0.0 {
        return Ok(None);
    }
    Ok(Some(extract_sigma_points(&weighted_pca(&pts, &w)?, alpha)?))
}

/// Everything an episode needs, fixed by the config and seed.
#[derive(Debug, Clone)]
pub struct ScenarioBundle {
    pub config: ScenarioConfig,
    pub mode: Mode,
    pub dt: f64,
    pub stamps: Vec<f64>,
    /// True camera-to-world poses.
    pub camera_poses: Vec<RigidTransform>,
    /// Reported camera-to-world poses (true pose with VO noise).
    pub vo_poses: Vec<RigidTransform>,
    /// Object-to-world poses.
    pub object_poses: Vec<RigidTransform>,
    /// Surface samples in the object frame.
    pub object_cloud: SurfacePointCloud,
    /// Training-side truth (solid-angle weighted), camera frame.
    pub true_sets: Vec<Option<SigmaPointSet>>,
    /// Noiseless sensor output (uniform weights over the visible surface),
    /// the reference the estimators are scored against.
    pub reference_sets: Vec<Option<SigmaPointSet>>,
    /// Whether the true centroid projects inside the image.
    pub centroid_in_fov: Vec<bool>,
    pub alpha: f64,
    /// Observation latency including any randomized perception delay (s).
    pub latency: f64,
    pub draw: Option<RandomizationDraw>,
}

impl ScenarioBundle {
    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    /// Object-to-camera transform at a tick.
    pub fn object_in_camera(&self, tick: usize) -> RigidTransform {
        self.camera_poses[tick]
            .inverse()
            .compose(&self.object_poses[tick])
            .expect("frames chain world")
    }

    pub fn cloud_at(&self, tick: usize) -> SurfacePointCloud {
        transform_points(&self.object_cloud, &self.object_in_camera(tick)).expect("object frame")
    }

    /// Relative VO transform `C_{tick-1} → C_tick`.
    pub fn vo_relative(&self, tick: usize) -> RigidTransform {
        self.vo_poses[tick]
            .inverse()
            .compose(&self.vo_poses[tick - 1])
            .expect("frames chain world")
    }

    /// Object velocity expressed in the current camera frame.
    pub fn object_velocity_in_camera(&self, tick: usize) -> Vec3 {
        self.camera_poses[tick].rotation().transpose() * self.config.object.velocity_at(self.stamps[tick])
    }

    pub fn obs_ticks(&self) -> impl Iterator<Item = usize> + '_ {
        let cutoff = self.config.measurement_cutoff.unwrap_or(f64::INFINITY);
        (0..self.len())
            .step_by(self.config.obs_stride())
            .filter(move |&k| self.stamps[k] <= cutoff + TIME_EPS)
    }
}

pub fn generate_scenario(cfg: &ScenarioConfig, mode: Mode, history_horizon: f64) -> Result<ScenarioBundle> {
    cfg.validate(history_horizon)?;
    let dt = cfg.control_period();
    let n = cfg.num_ticks();
    let stamps: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();

    let draw = match mode {
        Mode::Training => Some(sample_randomization(
            &cfg.randomization,
            &mut stream_rng(cfg.seed, Stream::Randomization),
        )),
        Mode::Deploy => None,
    };
    let alpha = draw.as_ref().map_or(cfg.alpha, |d| d.alpha);
    let latency = cfg.obs_latency + draw.as_ref().map_or(0.0, |d| d.perception_delay_s);
    let mount = draw.as_ref().map(|d| d.extrinsic_offset());

    let mut vo_rng = stream_rng(cfg.seed, Stream::Vo);
    let mut camera_poses = Vec::with_capacity(n);
    let mut vo_poses = Vec::with_capacity(n);
    let mut object_poses = Vec::with_capacity(n);
    let object_rot = rotation_from_axis_angle(&Vec3::from(cfg.object.orientation));
    for &t in &stamps {
        let (r, p) = cfg.camera_motion.pose_at(t);
        let nominal = RigidTransform::new(r, p, "camera_nominal", WORLD)?;
        let pose = match &mount {
            Some(m) => nominal.compose(m)?,
            None => RigidTransform::new_unchecked(r, p, CAMERA, WORLD),
        };
        let vn = cfg.vo_noise;
        let vo = if vn.translation_std > 0.0 || vn.rotation_std > 0.0 {
            let rot = Vec3::new(
                gaussian(&mut vo_rng, vn.rotation_std),
                gaussian(&mut vo_rng, vn.rotation_std),
                gaussian(&mut vo_rng, vn.rotation_std),
            );
            let tr = Vec3::new(
                gaussian(&mut vo_rng, vn.translation_std),
                gaussian(&mut vo_rng, vn.translation_std),
                gaussian(&mut vo_rng, vn.translation_std),
            );
            pose.compose(&RigidTransform::from_axis_angle(rot, tr, CAMERA, CAMERA))?
        } else {
            pose.clone()
        };
        camera_poses.push(pose);
        vo_poses.push(vo);
        object_poses.push(RigidTransform::new_unchecked(
            object_rot,
            cfg.object.position_at(t),
            OBJECT,
            WORLD,
        ));
    }

    let object_cloud = sample_surface(
        &cfg.object.shape,
        cfg.surface_samples,
        &mut stream_rng(cfg.seed, Stream::Surface),
    );
    let mut bundle = ScenarioBundle {
        config: cfg.clone(),
        mode,
        dt,
        stamps,
        camera_poses,
        vo_poses,
        object_poses,
        object_cloud,
        true_sets: Vec::with_capacity(n),
        reference_sets: Vec::with_capacity(n),
        centroid_in_fov: Vec::with_capacity(n),
        alpha,
        latency,
        draw,
    };
    for k in 0..n {
        let cloud = bundle.cloud_at(k);
        let truth = training_truth(&cloud, &cfg.camera, alpha)?;
        let visible = compute_visible_set(&cloud, &cfg.camera);
        let pts: Vec<Vec3> = visible.iter().map(|&i| cloud.points[i]).collect();
        let reference = sigma_points_uniform(&pts, alpha)?;
        let in_fov = truth.is_some_and(|s| cfg.camera.project_point(&s.centroid()).in_fov);
        bundle.true_sets.push(truth);
        bundle.reference_sets.push(reference);
        bundle.centroid_in_fov.push(in_fov);
    }
    Ok(bundle)
}

/// One emulated observation.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorReading {
    pub tick: usize,
    pub stamp: f64,
    pub available_at: f64,
    /// `None` when the target is not visible.
    pub set: Option<SigmaPointSet>,
}

/// Emulates the mask-tracking camera at `tick`: visible points are projected,
/// perturbed in pixel and depth, back-projected, and summarized with
/// uniform-weight PCA.
pub fn emulate_sensor<R: Rng + ?Sized>(
    bundle: &ScenarioBundle,
    tick: usize,
    cam: &CameraModel,
    noise: &SensorNoise,
    rng: &mut R,
) -> Result<SensorReading> {
    let cloud = bundle.cloud_at(tick);
    let visible = compute_visible_set(&cloud, cam);
    let (fu, fv, fz) = match noise.mode {
        PixelNoiseMode::Frame => (
            gaussian(rng, noise.sigma_u),
            gaussian(rng, noise.sigma_v),
            gaussian(rng, noise.sigma_z),
        ),
        PixelNoiseMode::Point => (0.0, 0.0, 0.0),
    };
    let mut points = Vec::with_capacity(visible.len());
    for &i in &visible {
        let p = cloud.points[i];
        let proj = cam.project_point(&p);
        let (du, dv, dz) = match noise.mode {
            PixelNoiseMode::Frame => (fu, fv, fz),
            PixelNoiseMode::Point => (
                gaussian(rng, noise.sigma_u),
                gaussian(rng, noise.sigma_v),
                gaussian(rng, noise.sigma_z),
            ),
        };
        let pixel = proj.pixel + Vector2::new(du, dv);
        // A depth pushed behind the near plane carries no usable pixel.
        if let Ok(q) = cam.backproject_pixel(&pixel, p.z + dz) {
            points.push(q);
        }
    }
    let stamp = bundle.stamps[tick];
    Ok(SensorReading {
        tick,
        stamp,
        available_at: stamp + bundle.latency,
        set: sigma_points_uniform(&points, bundle.alpha)?,
    })
}

/// Zero-order hold: the latest delivered measurement, unchanged.
#[derive(Debug, Clone, Default)]
pub struct ZeroOrderHold {
    latest: Option<(f64, SigmaPointSet)>,
}

impl ZeroOrderHold {
    pub fn deliver(&mut self, stamp: f64, set: SigmaPointSet) {
        if self.latest.is_none_or(|(s, _)| stamp >= s) {
            self.latest = Some((stamp, set));
        }
    }

    pub fn estimate(&self) -> Option<SigmaPointSet> {
        self.latest.map(|(_, s)| s)
    }

    pub fn held_stamp(&self) -> Option<f64> {
        self.latest.map(|(s, _)| s)
    }
}

/// Zero-order-hold estimates at `query` stamps from a stream of readings;
/// `None` before the first delivery.
pub fn baseline_zoh(readings: &[SensorReading], query: &[f64]) -> Vec<Option<SigmaPointSet>> {
    let mut sorted: Vec<&SensorReading> = readings.iter().filter(|r| r.set.is_some()).collect();
    sorted.sort_by(|a, b| a.available_at.total_cmp(&b.available_at));
    let mut zoh = ZeroOrderHold::default();
    let mut next = 0;
    query
        .iter()
        .map(|&t| {
            while next < sorted.len() && sorted[next].available_at <= t + TIME_EPS {
                let r = sorted[next];
                zoh.deliver(r.stamp, r.set.expect("filtered"));
                next += 1;
            }
            zoh.estimate()
        })
        .collect()
}

/// Same filter bank with ego-motion compensation skipped: every tick uses
/// the identity relative transform.
pub fn baseline_no_compensation(
    readings: &[SensorReading],
    cfg: &FilterConfig,
    cam: &CameraModel,
    query: &[f64],
) -> Result<Vec<Option<SigmaPointSet>>> {
    let mut sorted: Vec<&SensorReading> = readings.iter().filter(|r| r.set.is_some()).collect();
    sorted.sort_by(|a, b| a.available_at.total_cmp(&b.available_at));
    let start = query.first().copied().unwrap_or(0.0);
    let mut bank = FilterBank::new(cfg.clone(), start)?;
    let identity = RigidTransform::identity(CAMERA);
    let mut next = 0;
    let mut out = Vec::with_capacity(query.len());
    for (i, &t) in query.iter().enumerate() {
        if i > 0 {
            bank.step_bank(t - query[i - 1], &identity)?;
        }
        while next < sorted.len() && sorted[next].available_at <= t + TIME_EPS {
            let r = sorted[next];
            bank.ingest_measurement(&r.set.expect("filtered"), r.stamp, cam)?;
            next += 1;
        }
        out.push(bank.estimate());
    }
    Ok(out)
}

/// Reward and terminal evaluation inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSetup {
    pub geometry: TaskGeometry,
    #[serde(default)]
    pub criteria: CriteriaConfig,
    #[serde(default)]
    pub reward: RewardConfig,
}

#[derive(Debug, Clone, Default)]
pub struct EpisodeOptions {
    pub filter: FilterConfig,
    pub drift: Option<DriftConfig>,
    pub task: Option<TaskSetup>,
    /// Negative control: feed the main filter identity ego-motion.
    pub disable_ego_compensation: bool,
}

/// Per-tick log row.
#[derive(Debug, Clone)]
pub struct TickRecord {
    pub tick: usize,
    pub stamp: f64,
    pub filter: Option<SigmaPointSet>,
    pub filter_tracks: Option<[TrackState; SIGMA_COUNT]>,
    pub zoh: Option<SigmaPointSet>,
    pub zoh_stamp: Option<f64>,
    pub no_compensation: Option<SigmaPointSet>,
    pub reference: Option<SigmaPointSet>,
    pub visible: bool,
    pub drift: Vec3,
    /// Latest `available_at` among measurements delivered so far.
    pub last_delivery: Option<f64>,
    pub reward: Option<RewardBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub mode: Mode,
    pub ticks: usize,
    /// Ticks where every estimator and the reference are available.
    pub scored_ticks: usize,
    pub filter_rmse: [f64; SIGMA_COUNT],
    pub zoh_rmse: [f64; SIGMA_COUNT],
    pub no_compensation_rmse: [f64; SIGMA_COUNT],
    pub filter_centroid_rmse: f64,
    pub zoh_centroid_rmse: f64,
    pub no_compensation_centroid_rmse: f64,
    /// Centroid track velocity against the object velocity in camera axes.
    pub velocity_rmse: f64,
    /// Mean ZOH centroid error along the target's direction of motion.
    pub zoh_mean_lag_error: Option<f64>,
    pub zoh_mean_staleness: Option<f64>,
    pub visible_fraction: f64,
    pub max_drift: f64,
    pub measurements_taken: usize,
    pub measurements_delivered: usize,
    pub measurements_not_visible: usize,
    pub measurements_stale: usize,
    pub reward_sums: Option<RewardBreakdown>,
    pub terminal_status: Option<TerminalStatus>,
    pub randomization: Option<RandomizationDraw>,
}

#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub metrics: EpisodeMetrics,
    pub ticks: Vec<TickRecord>,
}

/// Maps camera axes (X right, Y down, Z forward) to base axes (X forward,
/// Y left, Z up).
fn camera_to_base_axes() -> Mat3 {
    Mat3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0)
}

/// Base-convention pose of the camera body used as the end-effector proxy.
pub fn body_pose(camera_pose: &RigidTransform) -> (Mat3, EndEffectorPose) {
    let m = camera_to_base_axes();
    let r = m * camera_pose.rotation() * m.transpose();
    let (roll, pitch, yaw) = Rotation3::from_matrix_unchecked(r).euler_angles();
    (r, EndEffectorPose::new(m * camera_pose.translation(), Vec3::new(roll, pitch, yaw)))
}

fn body_proprio(prev: &RigidTransform, cur: &RigidTransform, dt: f64, prev_action: Action) -> (ProprioState, Action) {
    let (r0, p0) = body_pose(prev);
    let (r1, p1) = body_pose(cur);
    let lin_vel = r1.transpose() * (p1.position - p0.position) / dt;
    let ang_vel = Rotation3::from_matrix_unchecked(r0.transpose() * r1).scaled_axis() / dt;
    let gravity_proj = r1.transpose() * Vec3::new(0.0, 0.0, -1.0);
    let action = [lin_vel.x, lin_vel.y, ang_vel.z, p1.euler.y];
    (
        ProprioState {
            gravity_proj,
            lin_vel,
            ang_vel,
            prev_action,
            task_flag: 0,
        },
        action,
    )
}

#[derive(Default)]
struct ErrorAccumulator {
    sum_sq: [f64; SIGMA_COUNT],
}

impl ErrorAccumulator {
    fn add(&mut self, est: &SigmaPointSet, reference: &SigmaPointSet) {
        for i in 0..SIGMA_COUNT {
            self.sum_sq[i] += (est.points[i] - reference.points[i]).norm_squared();
        }
    }

    fn rmse(&self, n: usize) -> [f64; SIGMA_COUNT] {
        if n == 0 {
            return [0.0; SIGMA_COUNT];
        }
        self.sum_sq.map(|s| (s / n as f64).sqrt())
    }
}

/// Runs the full loop on a bundle: per tick, the ego-compensated filter and
/// the two baselines advance, due measurements are delivered, and errors
/// against the reference sigma set are accumulated.
pub fn run_episode(bundle: &ScenarioBundle, opts: &EpisodeOptions) -> Result<EpisodeRun> {
    let cfg = &bundle.config;
    let cam = &cfg.camera;
    let n = bundle.len();
    let mut bank = FilterBank::new(opts.filter.clone(), bundle.stamps[0])?;
    let mut nocomp = FilterBank::new(opts.filter.clone(), bundle.stamps[0])?;
    let mut zoh = ZeroOrderHold::default();
    let identity = RigidTransform::identity(CAMERA);

    let mut sensor_rng = stream_rng(cfg.seed, Stream::Sensor);
    let mut drift_rng = stream_rng(cfg.seed, Stream::Drift);
    let mut drift = opts.drift.map(|d| d.initial_state());
    let obs_ticks: Vec<usize> = bundle.obs_ticks().collect();
    let mut next_obs = 0;
    let mut pending: VecDeque<SensorReading> = VecDeque::new();

    let mut ticks = Vec::with_capacity(n);
    let mut acc_f = ErrorAccumulator::default();
    let mut acc_z = ErrorAccumulator::default();
    let mut acc_n = ErrorAccumulator::default();
    let mut scored = 0usize;
    let mut vel_sq = 0.0;
    let mut vel_n = 0usize;
    let (mut lag_sum, mut lag_n, mut stale_sum) = (0.0, 0usize, 0.0);
    let (mut taken, mut delivered, mut not_visible, mut stale) = (0, 0, 0, 0);
    let mut last_delivery: Option<f64> = None;
    let mut max_drift: f64 = 0.0;
    let mut visible_ticks = 0usize;

    let mut reward_sums = opts.task.as_ref().map(|_| RewardBreakdown::default());
    let mut status: Option<TerminalStatus> = None;
    let mut prev_action: Action = [0.0; 4];

    for k in 0..n {
        let t = bundle.stamps[k];
        if k > 0 {
            let dt = t - bundle.stamps[k - 1];
            let rel = if opts.disable_ego_compensation { identity.clone() } else { bundle.vo_relative(k) };
            bank.step_bank(dt, &rel)?;
            nocomp.step_bank(dt, &identity)?;
        }
        while next_obs < obs_ticks.len() && obs_ticks[next_obs] == k {
            let reading = emulate_sensor(bundle, k, cam, &cfg.sensor, &mut sensor_rng)?;
            taken += 1;
            if reading.set.is_none() {
                not_visible += 1;
            }
            pending.push_back(reading);
            next_obs += 1;
        }
        while pending.front().is_some_and(|r| r.available_at <= t + TIME_EPS) {
            let r = pending.pop_front().expect("checked");
            let Some(set) = r.set else { continue };
            let outcome = bank.ingest_measurement(&set, r.stamp, cam)?;
            nocomp.ingest_measurement(&set, r.stamp, cam)?;
            zoh.deliver(r.stamp, set);
            match outcome {
                IngestOutcome::Stale => stale += 1,
                IngestOutcome::Applied { .. } => delivered += 1,
            }
            last_delivery = Some(last_delivery.map_or(r.available_at, |d: f64| d.max(r.available_at)));
        }

        let filter_est = bank.estimate();
        let zoh_est = zoh.estimate();
        let nocomp_est = nocomp.estimate();
        let reference = bundle.reference_sets[k];
        let visible = reference.is_some();
        if visible {
            visible_ticks += 1;
        }

        if let (Some(f), Some(z), Some(nc), Some(r)) = (filter_est, zoh_est, nocomp_est, reference) {
            acc_f.add(&f, &r);
            acc_z.add(&z, &r);
            acc_n.add(&nc, &r);
            scored += 1;

            let v_true = bundle.object_velocity_in_camera(k);
            if let Some(tracks) = bank.tracks() {
                vel_sq += (tracks[0].velocity - v_true).norm_squared();
                vel_n += 1;
            }
            let speed = v_true.norm();
            if speed > 1e-9 {
                lag_sum += (r.centroid() - z.centroid()).dot(&(v_true / speed));
                lag_n += 1;
            }
            stale_sum += t - zoh.held_stamp().expect("estimate present");
        }

        if let Some(d) = drift.as_mut() {
            *d = drift_step(d, &mut drift_rng, bundle.centroid_in_fov[k]);
            max_drift = max_drift.max(d.d.norm());
        }

        let reward = match (&opts.task, k) {
            (Some(task), k) if k > 0 => {
                let (_, pose) = body_pose(&bundle.camera_poses[k]);
                let (proprio, action) =
                    body_proprio(&bundle.camera_poses[k - 1], &bundle.camera_poses[k], bundle.dt, prev_action);
                let r = compute_reward(
                    &pose,
                    &task.geometry,
                    &task.criteria,
                    &proprio,
                    &action,
                    &prev_action,
                    !bundle.centroid_in_fov[k],
                    &task.reward,
                );
                prev_action = crate::tasklogic::clip_action(&action, &task.reward).0;
                if status != Some(TerminalStatus::Success) {
                    let s = terminal_status(&pose, &task.geometry, &task.criteria, k + 1 == n);
                    if s != TerminalStatus::Running || k + 1 == n {
                        status = Some(s);
                    }
                }
                if let Some(sums) = reward_sums.as_mut() {
                    sums.accumulate(&r);
                }
                Some(r)
            }
            _ => None,
        };

        ticks.push(TickRecord {
            tick: k,
            stamp: t,
            filter: filter_est,
            filter_tracks: bank.tracks().copied(),
            zoh: zoh_est,
            zoh_stamp: zoh.held_stamp(),
            no_compensation: nocomp_est,
            reference,
            visible,
            drift: drift.map_or(Vec3::zeros(), |d| d.d),
            last_delivery,
            reward,
        });
    }

    let f = acc_f.rmse(scored);
    let z = acc_z.rmse(scored);
    let nc = acc_n.rmse(scored);
    let metrics = EpisodeMetrics {
        seed: cfg.seed,
        mode: bundle.mode,
        ticks: n,
        scored_ticks: scored,
        filter_rmse: f,
        zoh_rmse: z,
        no_compensation_rmse: nc,
        filter_centroid_rmse: f[0],
        zoh_centroid_rmse: z[0],
        no_compensation_centroid_rmse: nc[0],
        velocity_rmse: if vel_n > 0 { (vel_sq / vel_n as f64).sqrt() } else { 0.0 },
        zoh_mean_lag_error: (lag_n > 0).then(|| lag_sum / lag_n as f64),
        zoh_mean_staleness: (scored > 0).then(|| stale_sum / scored as f64),
        visible_fraction: visible_ticks as f64 / n as f64,
        max_drift,
        measurements_taken: taken,
        measurements_delivered: delivered,
        measurements_not_visible: not_visible,
        measurements_stale: stale,
        reward_sums,
        terminal_status: status,
        randomization: bundle.draw.clone(),
    };
    Ok(EpisodeRun { metrics, ticks })
}

/// Walking camera, box target crossing the view at 0.3 m/s, 5 Hz
/// observations with 0.2 s latency and default sensor noise.
pub fn standard_scenario(seed: u64) -> ScenarioConfig {
    let object = ObjectConfig {
        shape: Shape::Box { dims: [0.24, 0.12, 0.06] },
        position: [-0.9, 0.0, 2.0],
        orientation: [0.0, 0.0, 0.0],
        motion: ObjectMotion::ConstantVelocity { velocity: [0.3, 0.0, 0.0] },
    };
    ScenarioConfig {
        seed,
        camera_motion: CameraMotion::walking(),
        ..ScenarioConfig::new(6.0, object)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn static_box(duration: f64) -> ScenarioConfig {
        ScenarioConfig::new(
            duration,
            ObjectConfig {
                shape: Shape::Box { dims: [0.2, 0.1, 0.05] },
                position: [0.0, 0.0, 1.0],
                orientation: [0.1, 0.2, 0.0],
                motion: ObjectMotion::Static,
            },
        )
    }

    fn horizon() -> f64 {
        FilterConfig::default().history_horizon(0.02)
    }

    #[test]
    fn static_scene_has_constant_truth() {
        let b = generate_scenario(&static_box(1.0), Mode::Deploy, horizon()).unwrap();
        assert_eq!(b.len(), 51);
        let first = b.true_sets[0].unwrap();
        assert!(b.true_sets.iter().all(|s| s.unwrap() == first));
    }

    #[test]
    fn constant_velocity_camera_advances_per_tick() {
        let mut cfg = static_box(1.0);
        cfg.camera_motion = CameraMotion::ConstantVelocity { velocity: [0.3, 0.0, 0.0] };
        let b = generate_scenario(&cfg, Mode::Deploy, horizon()).unwrap();
        for k in 1..b.len() {
            let step = b.camera_poses[k].translation() - b.camera_poses[k - 1].translation();
            assert!((step - Vec3::new(0.006, 0.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_bundle() {
        let mut cfg = static_box(0.5);
        cfg.camera_motion = CameraMotion::walking();
        cfg.vo_noise = VoNoise { translation_std: 0.001, rotation_std: 0.001 };
        let a = generate_scenario(&cfg, Mode::Training, horizon()).unwrap();
        let b = generate_scenario(&cfg, Mode::Training, horizon()).unwrap();
        assert_eq!(a.object_cloud, b.object_cloud);
        assert_eq!(a.vo_poses, b.vo_poses);
        assert_eq!(a.true_sets, b.true_sets);
        assert_eq!(a.draw, b.draw);
    }

    #[test]
    fn surface_samples_lie_on_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = sample_surface(&Shape::Sphere { radius: 0.5 }, 200, &mut rng);
        for (p, n) in s.points.iter().zip(&s.normals) {
            assert!((p.norm() - 0.5).abs() < 1e-12);
            assert!((p / 0.5 - n).norm() < 1e-12);
        }
        let b = sample_surface(&Shape::Box { dims: [0.2, 0.4, 0.6] }, 500, &mut rng);
        for (p, n) in b.points.iter().zip(&b.normals) {
            let axis = n.iamax();
            assert!((p[axis].abs() - [0.1, 0.2, 0.3][axis]).abs() < 1e-12);
        }
        let c = sample_surface(&Shape::Cylinder { radius: 0.1, height: 0.3 }, 500, &mut rng);
        for (p, n) in c.points.iter().zip(&c.normals) {
            if n.z == 0.0 {
                assert!(((p.x * p.x + p.y * p.y).sqrt() - 0.1).abs() < 1e-12);
            } else {
                assert!((p.z.abs() - 0.15).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_sensor_matches_reference() {
        let mut cfg = static_box(0.4);
        cfg.camera_motion = CameraMotion::walking();
        let b = generate_scenario(&cfg, Mode::Deploy, horizon()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for k in [0, 10, 20] {
            let r = emulate_sensor(&b, k, &cfg.camera, &SensorNoise::noiseless(), &mut rng).unwrap();
            let (m, reference) = (r.set.unwrap(), b.reference_sets[k].unwrap());
            for i in 0..SIGMA_COUNT {
                assert!((m.points[i] - reference.points[i]).norm() < 1e-9);
            }
            assert!((r.available_at - r.stamp - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn object_behind_camera_is_not_visible() {
        let mut cfg = static_box(0.2);
        cfg.object.position = [0.0, 0.0, -2.0];
        let b = generate_scenario(&cfg, Mode::Deploy, horizon()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = emulate_sensor(&b, 0, &cfg.camera, &cfg.sensor, &mut rng).unwrap();
        assert_eq!(r.set, None);
        assert!(b.reference_sets.iter().all(|s| s.is_none()));
    }

    #[test]
    fn zoh_before_first_delivery_is_empty() {
        let readings = vec![SensorReading {
            tick: 0,
            stamp: 0.0,
            available_at: 0.2,
            set: Some(SigmaPointSet::uniform(Vec3::new(0.0, 0.0, 1.0))),
        }];
        let out = baseline_zoh(&readings, &[0.0, 0.1, 0.2, 0.3]);
        assert_eq!(out[0], None);
        assert_eq!(out[1], None);
        assert!(out[2].is_some() && out[3].is_some());
    }

    #[test]
    fn static_noiseless_episode_converges() {
        let mut cfg = static_box(2.0);
        cfg.sensor = SensorNoise::noiseless();
        let b = generate_scenario(&cfg, Mode::Deploy, horizon()).unwrap();
        let run = run_episode(&b, &EpisodeOptions::default()).unwrap();
        for rec in run.ticks.iter().filter(|r| r.stamp >= 1.0) {
            let (f, r) = (rec.filter.unwrap(), rec.reference.unwrap());
            for i in 0..SIGMA_COUNT {
                assert!((f.points[i] - r.points[i]).norm() <= 1e-6);
            }
        }
        // static camera: the uncompensated bank is the same filter
        for rec in &run.ticks {
            assert_eq!(rec.filter, rec.no_compensation);
        }
    }

    #[test]
    fn estimates_are_causal() {
        let b = generate_scenario(&standard_scenario(3), Mode::Deploy, horizon()).unwrap();
        let run = run_episode(&b, &EpisodeOptions::default()).unwrap();
        for rec in &run.ticks {
            if let Some(d) = rec.last_delivery {
                assert!(d <= rec.stamp + 1e-9);
            }
            if let Some(s) = rec.zoh_stamp {
                assert!(s + b.latency <= rec.stamp + 1e-9);
            }
        }
    }

    #[test]
    fn episode_metrics_are_deterministic() {
        let cfg = standard_scenario(5);
        let opts = EpisodeOptions { drift: Some(DriftConfig::default()), ..Default::default() };
        let a = run_episode(&generate_scenario(&cfg, Mode::Training, horizon()).unwrap(), &opts).unwrap();
        let b = run_episode(&generate_scenario(&cfg, Mode::Training, horizon()).unwrap(), &opts).unwrap();
        assert_eq!(
            serde_json::to_string(&a.metrics).unwrap(),
            serde_json::to_string(&b.metrics).unwrap()
        );
    }

    #[test]
    fn turning_camera_saws_without_compensation() {
        let mut cfg = static_box(3.0);
        cfg.camera_motion = CameraMotion::Turning { omega: 0.2 };
        cfg.object.position = [0.0, 0.0, 2.0];
        cfg.sensor = SensorNoise::noiseless();
        cfg.obs_latency = 0.0;
        let b = generate_scenario(&cfg, Mode::Deploy, horizon()).unwrap();
        let run = run_episode(&b, &EpisodeOptions::default()).unwrap();
        let stride = cfg.obs_stride();
        let lateral = |r: &TickRecord| (r.no_compensation.unwrap().centroid().x - r.reference.unwrap().centroid().x).abs();
        let (mut before, mut at) = (0.0, 0.0);
        for k in (stride..b.len()).step_by(stride).filter(|&k| b.stamps[k] >= 1.0) {
            let (prev, now) = (&run.ticks[k - 1], &run.ticks[k]);
            if prev.reference.is_some() && now.reference.is_some() {
                before += lateral(prev);
                at += lateral(now);
            }
        }
        assert!(before > 0.0);
        assert!(before > 1.2 * at, "error before updates {before}, at updates {at}");
        assert!(run.metrics.filter_centroid_rmse < 0.5 * run.metrics.no_compensation_centroid_rmse);
    }

    #[test]
    fn config_validation_names_keys() {
        let mut cfg = static_box(1.0);
        cfg.obs_rate = 7.0;
        let err = generate_scenario(&cfg, Mode::Deploy, horizon()).unwrap_err();
        assert!(err.to_string().contains("scenario.obs_rate"));
        let mut cfg = static_box(1.0);
        cfg.obs_latency = 1.0;
        assert!(generate_scenario(&cfg, Mode::Deploy, horizon()).is_err());
        let cfg = static_box(0.0);
        assert!(generate_scenario(&cfg, Mode::Deploy, horizon())
            .unwrap_err()
            .to_string()
            .contains("scenario.duration"));
    }
}
