use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use egotrack::estimator::{
    compensate_ego_motion, covariance_is_healthy, init_track, measurement_covariance, predict, update, FilterBank,
    FilterConfig, TrackState,
};
use egotrack::geometry::{
    extract_sigma_points, solid_angle_weights, weighted_pca, CameraModel, Mat3, RigidTransform, SigmaPointSet, Vec3,
    SIGMA_COUNT,
};
use egotrack::perturbation::{drift_step, sample_randomization, DriftState, RandomizationConfig};
use egotrack::tasklogic::{
    alignment_errors, compute_reward, terminal_status, CriteriaConfig, EndEffectorPose, ProprioState, RewardConfig,
    TaskGeometry, TaskKind, TerminalStatus,
};

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn cloud() -> impl Strategy<Value = (Vec<Vec3>, Vec<f64>)> {
    (8usize..80).prop_flat_map(|n| {
        (
            prop::collection::vec(vec3(1.0), n),
            prop::collection::vec(0.05f64..2.0, n),
            vec3(2.0),
            (0.2f64..3.0, 0.2f64..3.0, 0.2f64..3.0),
        )
            .prop_map(|(pts, w, offset, (a, b, c))| {
                let stretch = Mat3::from_diagonal(&Vec3::new(a, b, c));
                (pts.iter().map(|p| stretch * p + offset).collect(), w)
            })
    })
}

fn transform() -> impl Strategy<Value = RigidTransform> {
    (vec3(PI), vec3(5.0)).prop_map(|(r, t)| RigidTransform::from_axis_angle(r, t, "a", "b"))
}

fn scale_of(m: &Mat3) -> f64 {
    m.abs().max().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pca_commutes_with_rigid_maps((pts, w) in cloud(), t in transform()) {
        let a = weighted_pca(&pts, &w).unwrap();
        let mapped: Vec<Vec3> = pts.iter().map(|p| t.transform_point(p)).collect();
        let b = weighted_pca(&mapped, &w).unwrap();
        let r = t.rotation();
        let scale = a.covariance().abs().max() + a.centroid.norm() + 1.0;
        prop_assert!((b.centroid - t.transform_point(&a.centroid)).norm() <= 1e-9 * scale);
        for k in 0..3 {
            prop_assert!((a.eigenvalues[k] - b.eigenvalues[k]).abs() <= 1e-9 * scale);
        }
        let rotated = r * a.covariance() * r.transpose();
        prop_assert!((b.covariance() - rotated).abs().max() <= 1e-9 * scale_of(&rotated));
    }

    #[test]
    fn sigma_pairs_are_symmetric((pts, w) in cloud(), alpha in 0.5f64..2.0) {
        let s = extract_sigma_points(&weighted_pca(&pts, &w).unwrap(), alpha).unwrap();
        for k in 0..3 {
            let sum = s.points[2 * k + 1] + s.points[2 * k + 2];
            prop_assert!((sum - 2.0 * s.points[0]).norm() <= 1e-12 * (1.0 + s.points[0].norm()));
        }
    }

    #[test]
    fn uniform_weight_scale_equivariance((pts, _) in cloud(), c in 0.1f64..10.0) {
        let w = vec![1.0; pts.len()];
        let a = weighted_pca(&pts, &w).unwrap();
        let scaled: Vec<Vec3> = pts.iter().map(|p| p * c).collect();
        let b = weighted_pca(&scaled, &w).unwrap();
        prop_assert!((b.centroid - a.centroid * c).norm() <= 1e-9 * (1.0 + b.centroid.norm()));
        for k in 0..3 {
            prop_assert!((b.eigenvalues[k] - a.eigenvalues[k] * c * c).abs() <= 1e-9 * (1.0 + b.eigenvalues[0]));
        }
    }

    #[test]
    fn solid_angle_weights_follow_facing(pts in prop::collection::vec(vec3(3.0), 1..50), dirs in prop::collection::vec(vec3(1.0), 50)) {
        let normals: Vec<Vec3> = pts.iter().zip(&dirs).map(|(_, d)| {
            let n = d.norm();
            if n < 1e-6 { Vec3::z() } else { d / n }
        }).collect();
        let pts: Vec<Vec3> = pts.iter().map(|p| if p.norm() < 1e-3 { p + Vec3::new(0.0, 0.0, 1.0) } else { *p }).collect();
        let w = solid_angle_weights(&pts, &normals).unwrap();
        for ((p, n), wi) in pts.iter().zip(&normals).zip(&w) {
            prop_assert!(*wi >= 0.0);
            prop_assert_eq!(*wi > 0.0, n.dot(p) < 0.0);
        }
    }

    #[test]
    fn covariance_stays_healthy(
        z0 in vec3(1.0),
        steps in prop::collection::vec((0.0f64..0.1, vec3(0.2), vec3(0.1), vec3(1.0), any::<bool>()), 1..60),
    ) {
        let cfg = FilterConfig::default();
        let cam = CameraModel::default();
        let mut t: TrackState = init_track(&(z0 + Vec3::new(0.0, 0.0, 2.0)), &cfg, 0.0);
        for (dt, rot, trans, noise, measure) in steps {
            t = predict(&t, dt, &cfg).unwrap();
            prop_assert!(covariance_is_healthy(&t.covariance));
            t = compensate_ego_motion(&t, &RigidTransform::from_axis_angle(rot, trans, "camera", "camera")).unwrap();
            prop_assert!(covariance_is_healthy(&t.covariance));
            if measure {
                let depth = t.position.z.max(cam.near_z);
                let r = measurement_covariance(&cam, depth, &cfg).unwrap();
                t = update(&t, &(t.position + noise * 0.05), &r, &cfg).unwrap();
                prop_assert!(covariance_is_healthy(&t.covariance));
            }
            let p = t.covariance;
            prop_assert!((p - p.transpose()).abs().max() <= 1e-9);
        }
    }

    #[test]
    fn larger_noise_never_moves_further(prior in -1.0f64..1.0, z in -1.0f64..1.0, r1 in 1e-4f64..1.0, extra in 0.0f64..1.0, axis in 0usize..3) {
        let cfg = FilterConfig::default();
        let mut pos = Vec3::new(0.0, 0.0, 1.0);
        pos[axis] += prior;
        let t = init_track(&pos, &cfg, 0.0);
        let mut meas = pos;
        meas[axis] = z;
        let shift = |r: f64| {
            let post = update(&t, &meas, &Mat3::from_diagonal_element(r), &cfg).unwrap();
            (post.position[axis] - pos[axis]).abs()
        };
        prop_assert!(shift(r1 + extra) <= shift(r1) + 1e-15);
    }

    #[test]
    fn late_ingest_equals_zero_lag(
        lag in 1usize..25,
        obs_every in 2usize..12,
        seed in any::<u64>(),
        yaw_rate in -0.5f64..0.5,
    ) {
        let cfg = FilterConfig::default();
        let cam = CameraModel::default();
        let dt = 0.02;
        let rel = RigidTransform::from_axis_angle(Vec3::new(0.0, yaw_rate * dt, 0.0), Vec3::new(0.001, 0.0, 0.002), "camera", "camera");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 120;
        let meas: Vec<Option<SigmaPointSet>> = (0..n).map(|k| {
            (k % obs_every == 0).then(|| {
                let c = Vec3::new(0.1, 0.0, 1.5) + Vec3::new(rand::Rng::random_range(&mut rng, -0.02..0.02), 0.0, 0.01 * k as f64 * dt);
                let mut pts = [c; SIGMA_COUNT];
                for k in 0..3 {
                    let mut a = Vec3::zeros();
                    a[k] = 0.2 / (k + 1) as f64;
                    pts[2 * k + 1] = c + a;
                    pts[2 * k + 2] = c - a;
                }
                SigmaPointSet::new(pts)
            })
        }).collect();

        let mut zero = FilterBank::new(cfg.clone(), 0.0).unwrap();
        let mut zero_at: Vec<Option<FilterBank>> = vec![None; n];
        for (k, m) in meas.iter().enumerate() {
            if k > 0 { zero.step_bank(dt, &rel).unwrap(); }
            if let Some(m) = m {
                zero.ingest_measurement(m, zero.stamp(), &cam).unwrap();
            }
            zero_at[k] = Some(zero.clone());
        }
        let mut late = FilterBank::new(cfg, 0.0).unwrap();
        let mut replayed_to = 0;
        for k in 0..n {
            if k > 0 { late.step_bank(dt, &rel).unwrap(); }
            if k >= lag {
                if let Some(m) = &meas[k - lag] {
                    late.ingest_measurement(m, (k - lag) as f64 * dt, &cam).unwrap();
                }
                replayed_to = k - lag;
            }
            // Zero-lag state at the newest delivered stamp, advanced open loop.
            if k >= lag {
                let mut oracle = zero_at[replayed_to].clone().unwrap();
                for _ in replayed_to..k { oracle.step_bank(dt, &rel).unwrap(); }
                match (late.tracks(), oracle.tracks()) {
                    (Some(a), Some(b)) => for (x, y) in a.iter().zip(b) {
                        prop_assert!((x.mean() - y.mean()).abs().max() <= 1e-9);
                    },
                    (None, None) => {}
                    _ => prop_assert!(false, "initialization differs at tick {}", k),
                }
            }
        }
    }

    #[test]
    fn drift_bounded_and_reset(seed in any::<u64>(), visibility in prop::collection::vec(any::<bool>(), 1..200), d_max in 0.01f64..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = DriftState::new(0.05, d_max);
        for v in visibility {
            s = drift_step(&s, &mut rng, v);
            prop_assert!(s.max_abs() <= d_max);
            if v { prop_assert_eq!(s.d, Vec3::zeros()); }
        }
    }

    #[test]
    fn randomization_reproducible(seed in any::<u64>()) {
        let cfg = RandomizationConfig::default();
        let a = sample_randomization(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let b = sample_randomization(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn success_and_failure_are_disjoint(dp in vec3(0.3), dth in vec3(0.6), timeout in any::<bool>()) {
        let geom = geometry();
        let pose = EndEffectorPose::new(geom.p_opt + dp, geom.theta_opt + dth);
        let crit = CriteriaConfig::default();
        let status = terminal_status(&pose, &geom, &crit, timeout);
        let inside = dp.x.abs() < crit.eps_x && dp.y.abs() < crit.eps_y && dth.z.abs() < crit.eps_yaw && dth.y.abs() < crit.eps_pitch;
        prop_assert_eq!(status == TerminalStatus::Success, inside);
        if !timeout { prop_assert_ne!(status, TerminalStatus::Failure); }
    }

    #[test]
    fn reward_terms_bounded(dp in vec3(0.5), dth in vec3(1.0), v in vec3(1.0), w in vec3(1.0), raw in prop::array::uniform4(-2.0f64..2.0), out_fov in any::<bool>()) {
        let geom = geometry();
        let pose = EndEffectorPose::new(geom.p_opt + dp, geom.theta_opt + dth);
        let proprio = ProprioState { lin_vel: v, ang_vel: w, ..ProprioState::default() };
        let rcfg = RewardConfig::default();
        let r = compute_reward(&pose, &geom, &CriteriaConfig::default(), &proprio, &raw, &[0.0; 4], out_fov, &rcfg);
        prop_assert!(r.hint > 0.0 && r.hint <= 2.0);
        prop_assert!((0.0..=1.0).contains(&r.opt));
        prop_assert!(r.miss == 0.0 || r.miss == 1.0);
        prop_assert!(r.limit >= 0.0 && r.smooth >= 0.0);
        for x in [0.0, 0.1, 0.5, 1.0] {
            let e = rcfg.shaping(x);
            prop_assert!(e > 0.0 && e <= 1.0);
        }
    }

    #[test]
    fn wrapped_angles_have_no_error(theta in vec3(PI), k in prop::array::uniform3(-3i32..=3)) {
        let mut geom = geometry();
        geom.theta_opt = theta;
        let shifted = theta + Vec3::new(k[0] as f64, k[1] as f64, k[2] as f64) * 2.0 * PI;
        let e = alignment_errors(&EndEffectorPose::new(geom.p_opt, shifted), &geom);
        prop_assert!(e.e_rot <= 1e-12);
        prop_assert_eq!(e.e_pos, 0.0);
    }
}

fn geometry() -> TaskGeometry {
    TaskGeometry {
        p_opt: Vec3::new(0.5, 0.0, 0.2),
        theta_opt: Vec3::new(0.0, 0.1, -0.3),
        p_hint: Vec3::new(0.1, 0.1, 0.3),
        w_p: [1.0; 3],
        w_r: [1.0; 3],
        task_kind: TaskKind::Release,
    }
}
