//! Task geometry, terminal criteria, reward terms, the active sampling
//! curriculum and dual-horizon observation assembly.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::{FRAC_PI_6, PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{SigmaPointSet, Vec3, SIGMA_COUNT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("competency {0} is outside [0, 1]")]
    RhoOutOfRange(f64),
    #[error("invalid task config: {0}")]
    InvalidConfig(String),
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a - TAU * ((a + PI) / TAU).floor();
    // w is in [−π, π); move the lower endpoint to π
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    LongAxis,
    ShortAxis,
    Release,
}

/// End-effector position and roll/pitch/yaw Euler angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndEffectorPose {
    pub position: Vec3,
    pub euler: Vec3,
}

impl EndEffectorPose {
    pub fn new(position: Vec3, euler: Vec3) -> Self {
        Self { position, euler }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskGeometry {
    pub p_opt: Vec3,
    /// Roll, pitch, yaw (rad).
    pub theta_opt: Vec3,
    pub p_hint: Vec3,
    /// Diagonal of the position weight matrix.
    #[serde(default = "unit_weights")]
    pub w_p: [f64; 3],
    /// Diagonal of the rotation weight matrix.
    #[serde(default = "unit_weights")]
    pub w_r: [f64; 3],
    pub task_kind: TaskKind,
}

fn unit_weights() -> [f64; 3] {
    [1.0; 3]
}

impl TaskGeometry {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.w_p.iter().chain(self.w_r.iter()).any(|w| !(*w >= 0.0)) {
            return Err(TaskError::InvalidConfig("weight matrices must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriteriaConfig {
    pub eps_x: f64,
    pub eps_y: f64,
    pub eps_yaw: f64,
    pub eps_pitch: f64,
    pub delta_x: f64,
    pub delta_y: f64,
    pub delta_yaw: f64,
    pub delta_pitch: f64,
}

impl Default for CriteriaConfig {
    fn default() -> Self {
        Self {
            eps_x: 0.05,
            eps_y: 0.03,
            eps_yaw: 0.10,
            eps_pitch: 0.15,
            delta_x: 0.10,
            delta_y: 0.10,
            delta_yaw: 0.20,
            delta_pitch: 0.20,
        }
    }
}

impl CriteriaConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        let pairs = [
            ("x", self.eps_x, self.delta_x),
            ("y", self.eps_y, self.delta_y),
            ("yaw", self.eps_yaw, self.delta_yaw),
            ("pitch", self.eps_pitch, self.delta_pitch),
        ];
        for (axis, eps, delta) in pairs {
            if !(eps > 0.0 && eps < delta) {
                return Err(TaskError::InvalidConfig(format!(
                    "success bound for {axis} must be positive and below the failure bound"
                )));
            }
        }
        Ok(())
    }
}

/// Which base twist components feed the terminal velocity shaping term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseVelocityMode {
    /// `(v_x, v_y, ω_z)`.
    #[default]
    Planar,
    /// Full linear velocity.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub hint: f64,
    pub opt: f64,
    pub miss: f64,
    pub roll: f64,
    pub ang: f64,
    pub smooth: f64,
    pub limit: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            hint: 0.4,
            opt: 20.0,
            miss: -0.1,
            roll: -2.0,
            ang: -0.1,
            smooth: -0.01,
            limit: -0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub sigma_track: f64,
    pub k: f64,
    pub weights: RewardWeights,
    /// Symmetric clip on `v_x, v_y, ω_z`.
    pub clip_planar: f64,
    /// Symmetric clip on body pitch (rad).
    pub clip_pitch: f64,
    pub base_velocity: BaseVelocityMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            sigma_track: 0.04,
            k: 1.0,
            weights: RewardWeights::default(),
            clip_planar: 0.5,
            clip_pitch: FRAC_PI_6,
            base_velocity: BaseVelocityMode::Planar,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        if !(self.sigma_track > 0.0) {
            return Err(TaskError::InvalidConfig("sigma_track must be positive".into()));
        }
        if !(self.clip_planar >= 0.0 && self.clip_pitch >= 0.0) {
            return Err(TaskError::InvalidConfig("action clips must be non-negative".into()));
        }
        Ok(())
    }

    /// Shaping kernel `exp(−x²/σ_track)` on a scalar.
    pub fn shaping(&self, x: f64) -> f64 {
        (-(x * x) / self.sigma_track).exp()
    }

    /// Shaping kernel on a squared norm.
    pub fn shaping_sq(&self, norm_sq: f64) -> f64 {
        (-norm_sq / self.sigma_track).exp()
    }
}

/// `[v_x, v_y, ω_z, θ_y]`.
pub type Action = [f64; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProprioState {
    /// Unit gravity direction in the base frame.
    pub gravity_proj: Vec3,
    pub lin_vel: Vec3,
    pub ang_vel: Vec3,
    pub prev_action: Action,
    pub task_flag: u8,
}

impl Default for ProprioState {
    fn default() -> Self {
        Self {
            gravity_proj: Vec3::new(0.0, 0.0, -1.0),
            lin_vel: Vec3::zeros(),
            ang_vel: Vec3::zeros(),
            prev_action: [0.0; 4],
            task_flag: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentErrors {
    pub e_pos: f64,
    pub e_rot: f64,
}

fn euler_delta(pose: &EndEffectorPose, geom: &TaskGeometry) -> Vec3 {
    (pose.euler - geom.theta_opt).map(wrap_angle)
}

pub fn alignment_errors(pose: &EndEffectorPose, geom: &TaskGeometry) -> AlignmentErrors {
    let dp = pose.position - geom.p_opt;
    let dt = euler_delta(pose, geom);
    let quad = |d: &Vec3, w: &[f64; 3]| (0..3).map(|i| w[i] * d[i] * d[i]).sum::<f64>();
    AlignmentErrors {
        e_pos: quad(&dp, &geom.w_p).sqrt(),
        e_rot: quad(&dt, &geom.w_r).sqrt(),
    }
}

/// Distance from `p_e` to the segment `[p_hint, p_opt]`.
pub fn cross_track_error(p_e: &Vec3, p_hint: &Vec3, p_opt: &Vec3) -> f64 {
    let seg = p_opt - p_hint;
    let len_sq = seg.norm_squared();
    if len_sq == 0.0 {
        return (p_e - p_hint).norm();
    }
    let s = ((p_e - p_hint).dot(&seg) / len_sq).clamp(0.0, 1.0);
    (p_e - (p_hint + seg * s)).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Success,
    Failure,
    /// Neither indicator fired; at timeout this is the ε–δ band case.
    Running,
}

impl TerminalStatus {
    pub fn is_success(self) -> bool {
        self == TerminalStatus::Success
    }
}

pub fn terminal_status(
    pose: &EndEffectorPose,
    geom: &TaskGeometry,
    crit: &CriteriaConfig,
    timed_out: bool,
) -> TerminalStatus {
    let dp = pose.position - geom.p_opt;
    let dt = euler_delta(pose, geom);
    let (dx, dy, dpitch, dyaw) = (dp.x.abs(), dp.y.abs(), dt.y.abs(), dt.z.abs());
    if dx < crit.eps_x && dy < crit.eps_y && dyaw < crit.eps_yaw && dpitch < crit.eps_pitch {
        return TerminalStatus::Success;
    }
    let violates = dx >= crit.delta_x
        || dy >= crit.delta_y
        || dyaw >= crit.delta_yaw
        || dpitch >= crit.delta_pitch;
    if timed_out && violates {
        TerminalStatus::Failure
    } else {
        TerminalStatus::Running
    }
}

/// Clips an action to the configured box; also returns `‖a_clip − a‖²`.
pub fn clip_action(raw: &Action, rcfg: &RewardConfig) -> (Action, f64) {
    let bounds = [rcfg.clip_planar, rcfg.clip_planar, rcfg.clip_planar, rcfg.clip_pitch];
    let mut clipped = *raw;
    let mut penalty = 0.0;
    for i in 0..4 {
        clipped[i] = raw[i].clamp(-bounds[i], bounds[i]);
        penalty += (clipped[i] - raw[i]).powi(2);
    }
    (clipped, penalty)
}

/// Unweighted reward terms; see [`RewardBreakdown::weighted`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub hint: f64,
    pub opt: f64,
    pub miss: f64,
    pub roll: f64,
    pub ang: f64,
    pub smooth: f64,
    pub limit: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub const TERM_NAMES: [&'static str; 7] = ["hint", "opt", "miss", "roll", "ang", "smooth", "limit"];

    pub fn terms(&self) -> [f64; 7] {
        [self.hint, self.opt, self.miss, self.roll, self.ang, self.smooth, self.limit]
    }

    pub fn weighted(&self, w: &RewardWeights) -> [f64; 7] {
        let ws = [w.hint, w.opt, w.miss, w.roll, w.ang, w.smooth, w.limit];
        let t = self.terms();
        std::array::from_fn(|i| ws[i] * t[i])
    }

    pub fn accumulate(&mut self, other: &RewardBreakdown) {
        self.hint += other.hint;
        self.opt += other.opt;
        self.miss += other.miss;
        self.roll += other.roll;
        self.ang += other.ang;
        self.smooth += other.smooth;
        self.limit += other.limit;
        self.total += other.total;
    }
}

/// Reward terms for one control tick. `raw_action` is the policy output
/// before clipping; the clipped action drives the smoothness term.
#[allow(clippy::too_many_arguments)]
pub fn compute_reward(
    pose: &EndEffectorPose,
    geom: &TaskGeometry,
    crit: &CriteriaConfig,
    proprio: &ProprioState,
    raw_action: &Action,
    prev_action: &Action,
    out_fov: bool,
    rcfg: &RewardConfig,
) -> RewardBreakdown {
    let align = alignment_errors(pose, geom);
    let d_path = cross_track_error(&pose.position, &geom.p_hint, &geom.p_opt);
    let success = terminal_status(pose, geom, crit, false).is_success();
    let (action, limit) = clip_action(raw_action, rcfg);

    let v_base_sq = match rcfg.base_velocity {
        BaseVelocityMode::Planar => {
            proprio.lin_vel.x.powi(2) + proprio.lin_vel.y.powi(2) + proprio.ang_vel.z.powi(2)
        }
        BaseVelocityMode::Linear => proprio.lin_vel.norm_squared(),
    };
    let e_pos = rcfg.shaping(align.e_pos);
    let e_rot = rcfg.shaping(align.e_rot);

    let mut r = RewardBreakdown {
        hint: rcfg.shaping(d_path) * e_rot * (1.0 + rcfg.k * e_pos),
        opt: if success { e_pos * e_rot * rcfg.shaping_sq(v_base_sq) } else { 0.0 },
        miss: if out_fov { 1.0 } else { 0.0 },
        roll: proprio.gravity_proj.y.powi(2),
        ang: proprio.ang_vel.x.powi(2) + proprio.ang_vel.y.powi(2),
        smooth: (0..4).map(|i| (action[i] - prev_action[i]).powi(2)).sum(),
        limit,
        total: 0.0,
    };
    r.total = r.weighted(&rcfg.weights).iter().sum();
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilitySchedule {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AscConfig {
    pub s_thresh: f64,
    pub lambda_asc: f64,
    pub near_optimal: ProbabilitySchedule,
    pub failure_replay: ProbabilitySchedule,
    pub window_n: usize,
    pub replay_capacity: usize,
    pub scope: CurriculumScope,
}

impl Default for AscConfig {
    fn default() -> Self {
        Self {
            s_thresh: 0.15,
            lambda_asc: 5.0,
            near_optimal: ProbabilitySchedule { start: 0.8, end: 0.1 },
            failure_replay: ProbabilitySchedule { start: 0.2, end: 0.5 },
            window_n: 100,
            replay_capacity: 1024,
            scope: CurriculumScope::Global,
        }
    }
}

impl AscConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        let probs = [
            self.near_optimal.start,
            self.near_optimal.end,
            self.failure_replay.start,
            self.failure_replay.end,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(TaskError::InvalidConfig("schedule probabilities must lie in [0, 1]".into()));
        }
        if !(self.s_thresh > 0.0) || !(self.lambda_asc >= 0.0) {
            return Err(TaskError::InvalidConfig("s_thresh must be positive and lambda_asc non-negative".into()));
        }
        if self.window_n == 0 {
            return Err(TaskError::InvalidConfig("window_n must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitType {
    NearOptimal,
    FailureReplay,
}

/// `P(ρ) = p_end + (p_start − p_end)·exp(−λρ)`.
pub fn asc_probability(rho: f64, init_type: InitType, acfg: &AscConfig) -> Result<f64, TaskError> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(TaskError::RhoOutOfRange(rho));
    }
    let s = match init_type {
        InitType::NearOptimal => acfg.near_optimal,
        InitType::FailureReplay => acfg.failure_replay,
    };
    Ok(s.end + (s.start - s.end) * (-acfg.lambda_asc * rho).exp())
}

/// What the failure-replay buffer remembers about a failed episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub seed: u64,
    pub pose: EndEffectorPose,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitChoice {
    NearOptimal,
    FailureReplay(ReplayEntry),
    Uniform,
}

/// Sliding outcome window, failure-replay buffer and competency.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AscState {
    window: VecDeque<bool>,
    replay: VecDeque<ReplayEntry>,
    rho: f64,
}

impl AscState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Running success rate over the window; 0 when empty.
    pub fn success_rate(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.window.iter().filter(|s| **s).count() as f64 / self.window.len() as f64
        }
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn replay_buffer(&self) -> &VecDeque<ReplayEntry> {
        &self.replay
    }

    /// Records an episode outcome. Only `Failure` outcomes with an entry
    /// enter the replay buffer; `Running` (timeout inside the band) counts
    /// as a non-success.
    pub fn update(&mut self, outcome: TerminalStatus, entry: Option<ReplayEntry>, acfg: &AscConfig) -> f64 {
        self.window.push_back(outcome.is_success());
        while self.window.len() > acfg.window_n {
            self.window.pop_front();
        }
        if outcome == TerminalStatus::Failure {
            if let Some(e) = entry {
                self.replay.push_back(e);
                while self.replay.len() > acfg.replay_capacity {
                    self.replay.pop_front();
                }
            }
        }
        self.rho = (self.success_rate() / acfg.s_thresh).min(1.0);
        self.rho
    }

    /// Probabilities of (near-optimal, failure-replay, uniform) at the current ρ.
    pub fn init_probabilities(&self, acfg: &AscConfig) -> (f64, f64, f64) {
        let near = asc_probability(self.rho, InitType::NearOptimal, acfg).expect("rho in range");
        let fail = asc_probability(self.rho, InitType::FailureReplay, acfg).expect("rho in range");
        (near, fail, (1.0 - near - fail).max(0.0))
    }

    pub fn sample_init<R: Rng + ?Sized>(&self, acfg: &AscConfig, rng: &mut R) -> InitChoice {
        let (near, fail, _) = self.init_probabilities(acfg);
        let u: f64 = rng.random();
        if u < near {
            InitChoice::NearOptimal
        } else if u < near + fail {
            if self.replay.is_empty() {
                InitChoice::Uniform
            } else {
                let i = rng.random_range(0..self.replay.len());
                InitChoice::FailureReplay(self.replay[i].clone())
            }
        } else {
            InitChoice::Uniform
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurriculumScope {
    #[default]
    Global,
    PerTask,
}

/// Curriculum state shared across task kinds or kept per kind.
#[derive(Debug, Clone, Default)]
pub struct AscScheduler {
    config: AscConfig,
    states: BTreeMap<Option<TaskKind>, AscState>,
}

impl AscScheduler {
    pub fn new(config: AscConfig) -> Self {
        Self {
            config,
            states: BTreeMap::new(),
        }
    }

    fn key(&self, kind: TaskKind) -> Option<TaskKind> {
        match self.config.scope {
            CurriculumScope::Global => None,
            CurriculumScope::PerTask => Some(kind),
        }
    }

    pub fn state(&self, kind: TaskKind) -> AscState {
        self.states.get(&self.key(kind)).cloned().unwrap_or_default()
    }

    /// Records outcomes in episode-index order so parallel evaluation merges
    /// deterministically.
    pub fn record_batch(&mut self, mut outcomes: Vec<(usize, TaskKind, TerminalStatus, Option<ReplayEntry>)>) {
        outcomes.sort_by_key(|o| o.0);
        for (_, kind, status, entry) in outcomes {
            let key = self.key(kind);
            let cfg = self.config.clone();
            self.states.entry(key).or_default().update(status, entry, &cfg);
        }
    }

    pub fn sample_init<R: Rng + ?Sized>(&self, kind: TaskKind, rng: &mut R) -> InitChoice {
        self.state(kind).sample_init(&self.config, rng)
    }
}

pub const H_SHORT: usize = 5;
pub const H_LONG: usize = 10;
/// Control ticks between long-horizon samples (50 Hz → 5 Hz).
pub const LONG_STRIDE: u64 = 10;
pub const SIGMA_FLAT_LEN: usize = 3 * SIGMA_COUNT;
/// gravity(3) + lin_vel(3) + ang_vel(3) + prev_action(4) + task_flag(1).
pub const PROPRIO_LEN: usize = 14;
pub const OBSERVATION_LEN: usize = PROPRIO_LEN + (H_SHORT + H_LONG) * SIGMA_FLAT_LEN;

/// Short ring of the latest control-rate sigma sets and a long ring sampled
/// every [`LONG_STRIDE`] ticks.
#[derive(Debug, Clone, Default)]
pub struct ObservationBuffer {
    short: VecDeque<(f64, SigmaPointSet)>,
    long: VecDeque<(f64, SigmaPointSet)>,
    ticks: u64,
}

impl ObservationBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn push(&mut self, stamp: f64, set: SigmaPointSet) {
        self.short.push_back((stamp, set));
        if self.short.len() > H_SHORT {
            self.short.pop_front();
        }
        if self.ticks.is_multiple_of(LONG_STRIDE) {
            self.long.push_back((stamp, set));
            if self.long.len() > H_LONG {
                self.long.pop_front();
            }
        }
        self.ticks += 1;
    }

    pub fn short_len(&self) -> usize {
        self.short.len()
    }

    pub fn long_stamps(&self) -> Vec<f64> {
        self.long.iter().map(|(s, _)| *s).collect()
    }
}

fn write_block(out: &mut Vec<f64>, ring: &VecDeque<(f64, SigmaPointSet)>, capacity: usize) {
    out.extend(std::iter::repeat_n(0.0, (capacity - ring.len()) * SIGMA_FLAT_LEN));
    for (_, s) in ring {
        out.extend_from_slice(&s.to_flat());
    }
}

/// Flat policy observation.
///
/// Layout: `[gravity(3), lin_vel(3), ang_vel(3), prev_action(4), task_flag(1)]`,
/// then the short block (`H_SHORT` frames) and the long block (`H_LONG`
/// frames), each frame being the 21 sigma coordinates, oldest frame first,
/// with zero frames padding the oldest slots until a ring fills.
pub fn assemble_observation(buf: &ObservationBuffer, proprio: &ProprioState) -> Vec<f64> {
    let mut out = Vec::with_capacity(OBSERVATION_LEN);
    out.extend_from_slice(proprio.gravity_proj.as_slice());
    out.extend_from_slice(proprio.lin_vel.as_slice());
    out.extend_from_slice(proprio.ang_vel.as_slice());
    out.extend_from_slice(&proprio.prev_action);
    out.push(proprio.task_flag as f64);
    write_block(&mut out, &buf.short, H_SHORT);
    write_block(&mut out, &buf.long, H_LONG);
    debug_assert_eq!(out.len(), OBSERVATION_LEN);
    out
}
