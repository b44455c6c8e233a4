//! Bundled acceptance scenarios behind `egotrack selftest` and the
//! `acceptance` test target. Each criterion compares production code with an
//! independent oracle from [`oracle`] or with an analytic value.

pub mod oracle;

use std::fmt;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::app::{self, RunFlags};
use crate::config::RunConfig;
use crate::estimator::{FilterBank, FilterConfig, TrackState};
use crate::geometry::{
    compute_visible_set, weighted_pca, CameraModel, RigidTransform, SigmaPointSet, SurfacePointCloud, Vec3,
    SIGMA_COUNT,
};
use crate::perturbation::{drift_step, DriftState};
use crate::sim::{
    emulate_sensor, generate_scenario, run_episode, sample_surface, standard_scenario, CameraMotion,
    EpisodeOptions, Mode, ObjectConfig, ObjectMotion, ScenarioBundle, ScenarioConfig, SensorNoise, Shape,
};
use crate::tasklogic::{
    asc_probability, compute_reward, terminal_status, AscConfig, CriteriaConfig, EndEffectorPose, InitType,
    ProprioState, RewardConfig, TaskGeometry, TaskKind, TerminalStatus,
};

use oracle::{Bounds, DenseKf, RewardInputs, RewardParams, V3};

pub const CRITERIA: [&str; 11] = [
    "weighted-PCA oracle equivalence",
    "visibility exactness",
    "KF textbook reduction",
    "ego-compensation exactness",
    "latency-replay equivalence",
    "baseline dominance",
    "measurement-noise scaling law",
    "ASC schedule",
    "drift model",
    "reward/criteria oracle",
    "determinism",
];

#[derive(Debug, Clone, Default)]
pub struct AcceptanceOptions {
    /// Negative control: runs the dominance scenario without ego-motion
    /// compensation.
    pub disable_ego_compensation: bool,
    /// Where the determinism criterion writes its two runs.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {:>2} {}: {}", self.id, self.name, self.detail)
    }
}

fn result(id: usize, passed: bool, detail: String) -> CriterionResult {
    CriterionResult {
        id,
        name: CRITERIA[id - 1],
        passed,
        detail,
    }
}

fn v3(v: &Vec3) -> V3 {
    [v.x, v.y, v.z]
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    Normal::new(0.0, std).expect("positive std").sample(rng)
}

/// Runs one criterion (1-based).
pub fn run_criterion(id: usize, opts: &AcceptanceOptions) -> CriterionResult {
    match id {
        1 => pca_oracle(),
        2 => visibility(),
        3 => kf_reduction(),
        4 => ego_compensation(),
        5 => latency_replay(),
        6 => baseline_dominance(opts.disable_ego_compensation),
        7 => noise_scaling(),
        8 => asc_schedule(),
        9 => drift_model(),
        10 => reward_oracle(),
        11 => determinism(opts),
        _ => panic!("no acceptance criterion {id}"),
    }
}

pub fn run_all(opts: &AcceptanceOptions) -> Vec<CriterionResult> {
    (1..=CRITERIA.len()).map(|id| run_criterion(id, opts)).collect()
}

fn pca_oracle() -> CriterionResult {
    const TOL: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(50..=500);
        let shape: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
        let offset: V3 = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
        let mut points = Vec::with_capacity(n);
        let mut raw = Vec::with_capacity(n);
        for _ in 0..n {
            let g: V3 = std::array::from_fn(|_| gaussian(&mut rng, 1.0));
            let p: V3 = std::array::from_fn(|i| offset[i] + (0..3).map(|j| shape[i][j] * g[j]).sum::<f64>());
            raw.push(p);
            points.push(Vec3::from(p));
        }
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..2.0)).collect();

        let pca = weighted_pca(&points, &weights).expect("valid cloud");
        let (mean, cov) = oracle::weighted_moments(&raw, &weights);
        let eig = oracle::jacobi_eigenvalues(&cov);
        let scale_c = mean.iter().map(|m| m * m).sum::<f64>().sqrt() + eig[0].sqrt();
        let dc = (0..3).map(|i| (pca.centroid[i] - mean[i]).abs()).fold(0.0, f64::max);
        let de = (0..3).map(|i| (pca.eigenvalues[i] - eig[i]).abs()).fold(0.0, f64::max);
        let rebuilt = pca.covariance();
        let scale_s = cov.iter().flatten().fold(0.0_f64, |a, b| a.max(b.abs()));
        let ds = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| (rebuilt[(i, j)] - cov[i][j]).abs())
            .fold(0.0, f64::max);
        worst = worst.max(dc / scale_c).max(de / eig[0]).max(ds / scale_s);
    }
    result(1, worst <= TOL, format!("100 clouds, max relative error {worst:.2e} (tol {TOL:.0e})"))
}

fn visibility() -> CriterionResult {
    let radius = 0.5;
    let center = Vec3::new(0.0, 0.0, 3.0);
    let local = sample_surface(&Shape::Sphere { radius }, 2048, &mut ChaCha8Rng::seed_from_u64(202));
    let cloud = SurfacePointCloud {
        points: local.points.iter().map(|p| p + center).collect(),
        normals: local.normals.clone(),
        frame: "camera".into(),
    };
    let visible = compute_visible_set(&cloud, &CameraModel::default());
    let mut mismatches = 0;
    let mut count = 0;
    for (i, n) in local.normals.iter().enumerate() {
        // Front-facing iff the outward normal opposes the ray: n·(c + r n) < 0.
        let expected = n.x * center.x + n.y * center.y + n.z * center.z + radius < 0.0;
        count += usize::from(expected);
        if expected != visible.binary_search(&i).is_ok() {
            mismatches += 1;
        }
    }
    result(
        2,
        mismatches == 0 && count > 0,
        format!("2048 points, {count} front-facing, {mismatches} mismatches"),
    )
}

fn compare_tracks(tracks: &[TrackState; SIGMA_COUNT], kfs: &[DenseKf]) -> f64 {
    let mut worst: f64 = 0.0;
    for (t, kf) in tracks.iter().zip(kfs) {
        let mean = t.mean();
        for i in 0..6 {
            worst = worst.max((mean[i] - kf.x[i]).abs());
            for j in 0..6 {
                worst = worst.max((t.covariance[(i, j)] - kf.p[i][j]).abs());
            }
        }
    }
    worst
}

fn kf_reduction() -> CriterionResult {
    const TOL: f64 = 1e-10;
    let cfg = FilterConfig {
        innovation_gate: None,
        ..FilterConfig::default()
    };
    let cam = CameraModel::default();
    let identity = RigidTransform::identity("camera");
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let base = |t: f64| {
        let c = Vec3::new(0.2 * (0.7 * t).sin(), -0.1 + 0.05 * t, 1.5 + 0.3 * (0.4 * t).cos());
        let axes = [Vec3::new(0.3, 0.0, 0.0), Vec3::new(0.0, 0.2, 0.0), Vec3::new(0.0, 0.0, 0.1)];
        let mut pts = [c; SIGMA_COUNT];
        for (k, a) in axes.iter().enumerate() {
            pts[2 * k + 1] = c + a;
            pts[2 * k + 2] = c - a;
        }
        pts
    };
    let measure = |t: f64, rng: &mut ChaCha8Rng| {
        base(t).map(|p| p + Vec3::new(gaussian(rng, 0.01), gaussian(rng, 0.01), gaussian(rng, 0.01)))
    };

    let mut bank = FilterBank::new(cfg.clone(), 0.0).expect("valid config");
    let first = measure(0.0, &mut rng);
    bank.ingest_measurement(&SigmaPointSet::new(first), 0.0, &cam).expect("ingest");
    let mut kfs: Vec<DenseKf> = first.iter().map(|z| DenseKf::new(v3(z), cfg.p0_pos, cfg.p0_vel)).collect();
    let mut worst = compare_tracks(bank.tracks().expect("initialized"), &kfs);
    let mut updates = 0;
    let mut t = 0.0;
    for _ in 0..500 {
        let dt = rng.random_range(0.005..0.05);
        t += dt;
        bank.step_bank(dt, &identity).expect("step");
        for kf in &mut kfs {
            kf.predict(dt, cfg.q_pos, cfg.q_vel);
        }
        if rng.random_bool(0.6) {
            let z = measure(t, &mut rng);
            bank.ingest_measurement(&SigmaPointSet::new(z), bank.stamp(), &cam).expect("ingest");
            for (kf, zi) in kfs.iter_mut().zip(&z) {
                let depth = kf.x[2].max(cam.near_z);
                let r = oracle::measurement_variances(depth, cam.fx, cam.fy, cfg.sigma_u, cfg.sigma_v, cfg.sigma_z);
                kf.update(v3(zi), r);
            }
            updates += 1;
        }
        worst = worst.max(compare_tracks(bank.tracks().expect("initialized"), &kfs));
    }
    result(
        3,
        worst <= TOL,
        format!("500 steps, {updates} updates, max abs deviation {worst:.2e} (tol {TOL:.0e})"),
    )
}

fn ego_scenario() -> ScenarioConfig {
    let object = ObjectConfig {
        shape: Shape::Box { dims: [0.3, 0.15, 0.1] },
        position: [0.1, 0.05, 1.5],
        orientation: [0.2, 0.4, 0.1],
        motion: ObjectMotion::Static,
    };
    ScenarioConfig {
        seed: 404,
        camera_motion: CameraMotion::walking(),
        measurement_cutoff: Some(1.0),
        ..ScenarioConfig::new(5.0, object)
    }
}

fn history_horizon(cfg: &ScenarioConfig) -> f64 {
    FilterConfig::default().history_horizon(cfg.control_period())
}

/// World-frame point and velocity of a camera-frame track.
fn track_in_world(track: &TrackState, camera_pose: &RigidTransform) -> (Vec3, Vec3) {
    (
        camera_pose.transform_point(&track.position),
        camera_pose.transform_vector(&track.velocity),
    )
}

fn ego_compensation() -> CriterionResult {
    const TOL: f64 = 1e-9;
    let cfg = ego_scenario();
    let bundle = generate_scenario(&cfg, Mode::Deploy, history_horizon(&cfg)).expect("scenario");
    let run = run_episode(&bundle, &EpisodeOptions::default()).expect("episode");
    let Some(last) = run.ticks.iter().filter_map(|r| r.last_delivery).reduce(f64::max) else {
        return result(4, false, "no measurement was delivered".into());
    };
    let start = run
        .ticks
        .iter()
        .position(|r| r.stamp >= last - 1e-9)
        .expect("delivery tick exists");
    let anchor = run.ticks[start].filter_tracks.expect("initialized");
    let t0 = bundle.stamps[start];
    let world: Vec<(Vec3, Vec3)> = anchor
        .iter()
        .map(|t| track_in_world(t, &bundle.camera_poses[start]))
        .collect();
    let mut worst: f64 = 0.0;
    for k in start..bundle.len() {
        let tracks = run.ticks[k].filter_tracks.expect("initialized");
        let to_camera = bundle.camera_poses[k].inverse();
        for (t, (p, v)) in tracks.iter().zip(&world) {
            let expected = to_camera.transform_point(&(p + v * (bundle.stamps[k] - t0)));
            worst = worst.max((t.position - expected).norm());
            worst = worst.max((t.velocity - to_camera.transform_vector(v)).norm());
        }
    }
    let span = bundle.stamps[bundle.len() - 1] - t0;
    result(
        4,
        worst <= TOL && span >= 3.5,
        format!("{span:.2} s open loop after the last update, max deviation {worst:.2e} m (tol {TOL:.0e})"),
    )
}

fn latency_replay() -> CriterionResult {
    const TOL: f64 = 1e-9;
    let cfg = standard_scenario(505);
    let bundle: ScenarioBundle = generate_scenario(&cfg, Mode::Deploy, history_horizon(&cfg)).expect("scenario");
    let cam = &cfg.camera;
    let filter = FilterConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let readings: Vec<_> = bundle
        .obs_ticks()
        .map(|k| emulate_sensor(&bundle, k, cam, &cfg.sensor, &mut rng).expect("sensor"))
        .filter(|r| r.set.is_some())
        .collect();

    // Zero-latency filter: each measurement applied at its own tick.
    let mut zero = FilterBank::new(filter.clone(), bundle.stamps[0]).expect("bank");
    let mut after_update: Vec<FilterBank> = Vec::new();
    let mut next = 0;
    for k in 0..bundle.len() {
        if k > 0 {
            zero.step_bank(bundle.dt, &bundle.vo_relative(k)).expect("step");
        }
        while next < readings.len() && readings[next].tick == k {
            let r = &readings[next];
            zero.ingest_measurement(&r.set.expect("visible"), r.stamp, cam).expect("ingest");
            after_update.push(zero.clone());
            next += 1;
        }
    }

    let mut late = FilterBank::new(filter, bundle.stamps[0]).expect("bank");
    let mut delivered = 0;
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for k in 0..bundle.len() {
        let t = bundle.stamps[k];
        if k > 0 {
            late.step_bank(bundle.dt, &bundle.vo_relative(k)).expect("step");
        }
        while delivered < readings.len() && readings[delivered].available_at <= t + 1e-9 {
            let r = &readings[delivered];
            late.ingest_measurement(&r.set.expect("visible"), r.stamp, cam).expect("ingest");
            delivered += 1;
        }
        if delivered == 0 {
            if late.is_initialized() {
                return result(5, false, format!("estimate before first delivery at tick {k}"));
            }
            continue;
        }
        // Oracle: zero-latency posterior at the newest delivered stamp,
        // propagated open loop to the current tick.
        let mut oracle = after_update[delivered - 1].clone();
        for j in readings[delivered - 1].tick + 1..=k {
            oracle.step_bank(bundle.dt, &bundle.vo_relative(j)).expect("step");
        }
        let (a, b) = (late.tracks().expect("initialized"), oracle.tracks().expect("initialized"));
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x.mean() - y.mean()).abs().max());
        }
        compared += 1;
    }
    result(
        5,
        worst <= TOL && compared > 0,
        format!(
            "{} measurements at {:.2} s latency, {compared} ticks compared, max deviation {worst:.2e} (tol {TOL:.0e})",
            readings.len(),
            bundle.latency
        ),
    )
}

/// Seeds pooled for the dominance scenario.
pub const DOMINANCE_SEEDS: u64 = 64;

fn baseline_dominance(disable_ego_compensation: bool) -> CriterionResult {
    let opts = EpisodeOptions {
        disable_ego_compensation,
        ..EpisodeOptions::default()
    };
    let metrics: Vec<_> = (0..DOMINANCE_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let cfg = standard_scenario(600 + seed);
            let bundle = generate_scenario(&cfg, Mode::Deploy, history_horizon(&cfg)).expect("scenario");
            run_episode(&bundle, &opts).expect("episode").metrics
        })
        .collect();
    let n = metrics.len() as f64;
    let mean = |f: &dyn Fn(&crate::sim::EpisodeMetrics) -> f64| metrics.iter().map(f).sum::<f64>() / n;
    let filter = mean(&|m| m.filter_centroid_rmse);
    let zoh = mean(&|m| m.zoh_centroid_rmse);
    let nocomp = mean(&|m| m.no_compensation_centroid_rmse);
    let lag = mean(&|m| m.zoh_mean_lag_error.unwrap_or(f64::NAN));
    let per_seed = metrics
        .iter()
        .filter(|m| m.filter_centroid_rmse < m.zoh_centroid_rmse && m.filter_centroid_rmse < m.no_compensation_centroid_rmse)
        .count();

    let base = standard_scenario(0);
    let speed = match base.object.motion {
        ObjectMotion::ConstantVelocity { velocity } => Vec3::from(velocity).norm(),
        _ => unreachable!("standard target moves at constant velocity"),
    };
    // Held measurement age: latency plus half an observation period on average.
    let bound = speed * (base.obs_latency + 0.5 / base.obs_rate);
    let lag_ok = ((lag - bound) / bound).abs() <= 0.10;
    let passed = per_seed == metrics.len() && lag_ok;
    result(
        6,
        passed,
        format!(
            "{} seeds: centroid RMSE filter {filter:.4} / zoh {zoh:.4} / no-comp {nocomp:.4} m, filter best in {per_seed}; zoh lag {lag:.4} m vs {bound:.4} m (±10%)",
            metrics.len()
        ),
    )
}

fn noise_scaling() -> CriterionResult {
    const TOL: f64 = 0.15;
    const DRAWS: usize = 1000;
    let filter = FilterConfig::default();
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for (i, depth) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let object = ObjectConfig {
            shape: Shape::Sphere { radius: 0.02 },
            position: [0.0, 0.0, depth],
            orientation: [0.0; 3],
            motion: ObjectMotion::Static,
        };
        let cfg = ScenarioConfig {
            seed: 700 + i as u64,
            ..ScenarioConfig::new(0.02, object)
        };
        let bundle = generate_scenario(&cfg, Mode::Deploy, history_horizon(&cfg)).expect("scenario");
        let z_ref = bundle.reference_sets[0].expect("visible").centroid().z;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let samples: Vec<Vec3> = (0..DRAWS)
            .map(|_| {
                emulate_sensor(&bundle, 0, &cfg.camera, &SensorNoise::default(), &mut rng)
                    .expect("sensor")
                    .set
                    .expect("visible")
                    .centroid()
            })
            .collect();
        let mean = samples.iter().fold(Vec3::zeros(), |a, s| a + s) / DRAWS as f64;
        let var: Vec<f64> = (0..3)
            .map(|a| samples.iter().map(|s| (s[a] - mean[a]).powi(2)).sum::<f64>() / (DRAWS - 1) as f64)
            .collect();
        let model = oracle::measurement_variances(
            z_ref,
            cfg.camera.fx,
            cfg.camera.fy,
            filter.sigma_u,
            filter.sigma_v,
            filter.sigma_z,
        );
        let rel: Vec<f64> = (0..3).map(|a| (var[a] - model[a]).abs() / model[a]).collect();
        worst = rel.iter().fold(worst, |w, r| w.max(*r));
        details.push(format!(
            "Z={depth}: std x {:.4} (model {:.4})",
            var[0].sqrt(),
            model[0].sqrt()
        ));
    }
    result(
        7,
        worst <= TOL,
        format!("{}; max relative variance error {:.1}% (tol 15%)", details.join(", "), 100.0 * worst),
    )
}

fn asc_schedule() -> CriterionResult {
    let cfg = AscConfig::default();
    let p = |rho: f64, t: InitType| asc_probability(rho, t, &cfg).expect("rho in range");
    let near0 = p(0.0, InitType::NearOptimal);
    let fail0 = p(0.0, InitType::FailureReplay);
    let near1 = p(1.0, InitType::NearOptimal);
    let closed = 0.1 + 0.7 * (-5.0_f64).exp();
    let mut ok = near0 == 0.8 && fail0 == 0.2 && (near1 - closed).abs() <= 1e-12;

    let mut oracle_dev: f64 = 0.0;
    let mut monotone = true;
    let mut max_sum = f64::NEG_INFINITY;
    let mut prev = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..1000 {
        let rho = i as f64 / 999.0;
        let (near, fail) = (p(rho, InitType::NearOptimal), p(rho, InitType::FailureReplay));
        oracle_dev = oracle_dev
            .max((near - oracle::asc_schedule(rho, 0.8, 0.1, 5.0)).abs())
            .max((fail - oracle::asc_schedule(rho, 0.2, 0.5, 5.0)).abs());
        monotone &= near <= prev.0 && fail >= prev.1;
        max_sum = max_sum.max(near + fail);
        prev = (near, fail);
    }
    ok &= monotone && max_sum <= 1.0 && oracle_dev <= 1e-12;
    result(
        8,
        ok,
        format!(
            "P_near(0)={near0}, P_fail(0)={fail0}, P_near(1) off closed form by {:.1e}; monotone={monotone}, max sum {max_sum}",
            (near1 - closed).abs()
        ),
    )
}

fn drift_model() -> CriterionResult {
    const ROLLOUTS: usize = 10_000;
    const STEPS: usize = 100;
    const CHECKPOINTS: [usize; 4] = [10, 25, 50, 100];
    let sigma = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(909);

    let mut max_abs: f64 = 0.0;
    let mut clipped = false;
    for _ in 0..ROLLOUTS {
        let mut s = DriftState::new(sigma, 0.10);
        for _ in 0..STEPS {
            s = drift_step(&s, &mut rng, false);
            max_abs = max_abs.max(s.max_abs());
            clipped |= s.max_abs() == 0.10;
        }
    }

    let mut sum_sq = [0.0; CHECKPOINTS.len()];
    for _ in 0..ROLLOUTS {
        let mut s = DriftState::new(sigma, f64::INFINITY);
        let mut c = 0;
        for t in 1..=STEPS {
            s = drift_step(&s, &mut rng, false);
            if t == CHECKPOINTS[c] {
                sum_sq[c] += s.d.norm_squared();
                c = (c + 1).min(CHECKPOINTS.len() - 1);
            }
        }
    }
    let mut worst_growth: f64 = 0.0;
    for (c, &t) in CHECKPOINTS.iter().enumerate() {
        let var = sum_sq[c] / (3 * ROLLOUTS) as f64;
        worst_growth = worst_growth.max((var / (sigma * sigma * t as f64) - 1.0).abs());
    }

    let mut reset_ok = true;
    for _ in 0..ROLLOUTS / 10 {
        let mut s = DriftState::new(sigma, 0.10);
        for _ in 0..20 {
            let visible = rng.random_bool(0.3);
            s = drift_step(&s, &mut rng, visible);
            if visible {
                reset_ok &= s.d == Vec3::zeros();
            }
        }
    }
    let passed = max_abs <= 0.10 && clipped && worst_growth <= 0.05 && reset_ok;
    result(
        9,
        passed,
        format!(
            "max |d| {max_abs:.4} (bound 0.10, reached={clipped}); unclipped variance off σ²t by {:.2}% (tol 5%); reset exact={reset_ok}",
            100.0 * worst_growth
        ),
    )
}

fn reward_oracle() -> CriterionResult {
    let crit = CriteriaConfig::default();
    let rcfg = RewardConfig::default();
    let bounds = Bounds {
        eps: [0.05, 0.03, 0.10, 0.15],
        delta: [0.10, 0.10, 0.20, 0.20],
    };
    let params = RewardParams {
        sigma_track: 0.04,
        k: 1.0,
        clip: [0.5, 0.5, 0.5, std::f64::consts::FRAC_PI_6],
        bounds,
    };
    let weights = [0.4, 20.0, -0.1, -2.0, -0.1, -0.01, -0.1];
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut uni = |lo: f64, hi: f64| rng.random_range(lo..hi);

    let mut status_mismatch = 0;
    let mut term_dev: f64 = 0.0;
    let mut seen = [0usize; 3];
    for i in 0..1000 {
        let p_opt = [uni(-0.5, 0.5), uni(-0.5, 0.5), uni(0.0, 0.4)];
        let theta_opt = [uni(-0.3, 0.3), uni(-0.5, 0.5), uni(-3.1, 3.1)];
        let p_hint = [p_opt[0] - uni(0.1, 0.5), p_opt[1] + uni(-0.3, 0.3), p_opt[2] + uni(0.0, 0.2)];
        // Alternate tight and wide spreads so every outcome class occurs.
        let s = if i % 2 == 0 { 0.08 } else { 0.3 };
        let p = [p_opt[0] + uni(-s, s), p_opt[1] + uni(-s, s), p_opt[2] + uni(-s, s)];
        let theta = [
            oracle::wrap(theta_opt[0] + uni(-s, s)),
            oracle::wrap(theta_opt[1] + uni(-2.0 * s, 2.0 * s)),
            oracle::wrap(theta_opt[2] + uni(-2.0 * s, 2.0 * s)),
        ];
        let w_p = [uni(0.5, 2.0), uni(0.5, 2.0), uni(0.5, 2.0)];
        let w_r = [uni(0.5, 2.0), uni(0.5, 2.0), uni(0.5, 2.0)];
        let g = Vec3::new(uni(-0.3, 0.3), uni(-0.3, 0.3), -1.0).normalize();
        let lin_vel = [uni(-0.5, 0.5), uni(-0.5, 0.5), uni(-0.2, 0.2)];
        let ang_vel = [uni(-0.5, 0.5), uni(-0.5, 0.5), uni(-0.8, 0.8)];
        let action = [uni(-1.0, 1.0), uni(-1.0, 1.0), uni(-1.0, 1.0), uni(-1.0, 1.0)];
        let prev_action = [uni(-0.5, 0.5), uni(-0.5, 0.5), uni(-0.5, 0.5), uni(-0.5, 0.5)];
        let out_fov = uni(0.0, 1.0) < 0.3;
        let timeout = i % 3 != 0;

        let geom = TaskGeometry {
            p_opt: Vec3::from(p_opt),
            theta_opt: Vec3::from(theta_opt),
            p_hint: Vec3::from(p_hint),
            w_p,
            w_r,
            task_kind: TaskKind::LongAxis,
        };
        let pose = EndEffectorPose::new(Vec3::from(p), Vec3::from(theta));
        let status = terminal_status(&pose, &geom, &crit, timeout);
        let success = oracle::success_indicator(p, theta, p_opt, theta_opt, &bounds);
        let fail = oracle::fail_indicator(p, theta, p_opt, theta_opt, &bounds, timeout);
        let expected = match (success, fail) {
            (true, _) => TerminalStatus::Success,
            (false, true) => TerminalStatus::Failure,
            (false, false) => TerminalStatus::Running,
        };
        if status != expected {
            status_mismatch += 1;
        }
        if timeout {
            seen[match expected {
                TerminalStatus::Success => 0,
                TerminalStatus::Failure => 1,
                TerminalStatus::Running => 2,
            }] += 1;
        }

        let proprio = ProprioState {
            gravity_proj: g,
            lin_vel: Vec3::from(lin_vel),
            ang_vel: Vec3::from(ang_vel),
            prev_action,
            task_flag: 0,
        };
        let got = compute_reward(&pose, &geom, &crit, &proprio, &action, &prev_action, out_fov, &rcfg);
        let inputs = RewardInputs {
            p,
            theta,
            p_opt,
            theta_opt,
            p_hint,
            w_p,
            w_r,
            gravity: v3(&g),
            lin_vel,
            ang_vel,
            action,
            prev_action,
            out_fov,
        };
        let want = oracle::reward_terms(&inputs, &params);
        let total: f64 = (0..7).map(|k| weights[k] * want[k]).sum();
        for (a, b) in got.terms().iter().zip(&want) {
            term_dev = term_dev.max((a - b).abs());
        }
        term_dev = term_dev.max((got.total - total).abs());
    }

    // Hand-placed poses: inside ε, inside the ε–δ band, beyond δ.
    let geom = TaskGeometry {
        p_opt: Vec3::zeros(),
        theta_opt: Vec3::zeros(),
        p_hint: Vec3::new(-0.3, 0.0, 0.0),
        w_p: [1.0; 3],
        w_r: [1.0; 3],
        task_kind: TaskKind::ShortAxis,
    };
    let at = |x: f64, pitch: f64| EndEffectorPose::new(Vec3::new(x, 0.0, 0.0), Vec3::new(0.0, pitch, 0.0));
    let partition = terminal_status(&at(0.04, 0.1), &geom, &crit, true) == TerminalStatus::Success
        && terminal_status(&at(0.07, 0.1), &geom, &crit, true) == TerminalStatus::Running
        && terminal_status(&at(0.04, 0.17), &geom, &crit, true) == TerminalStatus::Running
        && terminal_status(&at(0.10, 0.0), &geom, &crit, true) == TerminalStatus::Failure
        && terminal_status(&at(0.0, 0.2), &geom, &crit, true) == TerminalStatus::Failure
        && terminal_status(&at(0.10, 0.0), &geom, &crit, false) == TerminalStatus::Running;

    let passed = status_mismatch == 0 && term_dev <= 1e-12 && partition && seen.iter().all(|&c| c > 0);
    result(
        10,
        passed,
        format!(
            "1000 poses: {status_mismatch} status mismatches, timeout outcomes success/failure/band {}/{}/{}, max reward deviation {term_dev:.1e} (tol 1e-12), band cases {}",
            seen[0],
            seen[1],
            seen[2],
            if partition { "ok" } else { "wrong" }
        ),
    )
}

/// Config used by the determinism criterion: standard scenario with a task,
/// training mode so drift and randomization draws are exercised.
pub const DETERMINISM_CONFIG: &str = r#"{
  "scenario": {
    "seed": 11,
    "duration": 3.0,
    "camera_motion": {"kind": "walking"},
    "vo_noise": {"translation_std": 0.002, "rotation_std": 0.002},
    "object": {
      "shape": {"kind": "box", "dims": [0.24, 0.12, 0.06]},
      "position": [-0.45, 0.0, 2.0],
      "motion": {"kind": "constant_velocity", "velocity": [0.3, 0.0, 0.0]}
    }
  },
  "task": {
    "p_opt": [2.0, 0.0, 0.0],
    "theta_opt": [0.0, 0.0, 0.0],
    "p_hint": [1.0, 0.0, 0.0],
    "task_kind": "long_axis"
  }
}
"#;

fn determinism(opts: &AcceptanceOptions) -> CriterionResult {
    let cfg = RunConfig::parse(DETERMINISM_CONFIG).expect("bundled config parses");
    let flags = RunFlags {
        mode: Mode::Training,
        disable_ego_compensation: false,
    };
    let csv = |seed| {
        app::episode(&cfg, seed, flags)
            .map(|run| app::metrics_csv(&run, true))
            .expect("episode")
    };
    let (a, b) = (csv(11), csv(11));
    let mut ok = a == b && a != csv(12);
    let mut detail = format!("in-memory metrics.csv {} bytes, identical={}", a.len(), a == b);

    if let Some(dir) = &opts.out_dir {
        let written = (|| -> Result<bool, String> {
            std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
            let path = dir.join("determinism_config.json");
            std::fs::write(&path, DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
            let mut files = Vec::new();
            for run in ["run_a", "run_b"] {
                let out = dir.join(run);
                app::run(&path, Some(11), &out, flags).map_err(|e| e.to_string())?;
                files.push(std::fs::read(out.join(app::METRICS_FILE)).map_err(|e| e.to_string())?);
            }
            Ok(files[0] == files[1] && files[0] == a.as_bytes())
        })();
        match written {
            Ok(same) => {
                ok &= same;
                detail.push_str(&format!("; on-disk runs identical={same}"));
            }
            Err(e) => {
                ok = false;
                detail.push_str(&format!("; on-disk run failed: {e}"));
            }
        }
    }
    result(11, ok, detail)
}
