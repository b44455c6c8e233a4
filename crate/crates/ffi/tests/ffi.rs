use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use egotrack::estimator::{FilterBank, FilterConfig};
use egotrack::geometry::{sigma_points_uniform, CameraModel, RigidTransform, SigmaPointSet, Vec3};
use egotrack::tasklogic::{asc_probability, AscConfig, InitType};
use egotrack_ffi::*;

fn last_error() -> String {
    let p = egt_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn measurement(c: Vec3) -> SigmaPointSet {
    let mut pts = [c; 7];
    for k in 0..3 {
        let mut a = Vec3::zeros();
        a[k] = 0.1 / (k + 1) as f64;
        pts[2 * k + 1] = c + a;
        pts[2 * k + 2] = c - a;
    }
    SigmaPointSet::new(pts)
}

#[test]
fn bank_matches_native_bank() {
    let rel = RigidTransform::from_axis_angle(Vec3::new(0.0, 0.01, 0.002), Vec3::new(0.003, 0.0, 0.001), "camera", "camera");
    let rot: Vec<f64> = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| rel.rotation()[(i, j)]).collect();
    let trans = [rel.translation().x, rel.translation().y, rel.translation().z];
    let cam = egt_camera_default();
    let native_cam = CameraModel::default();

    let mut native = FilterBank::new(FilterConfig::default(), 0.0).unwrap();
    let mut handle = ptr::null_mut();
    unsafe {
        assert_eq!(egt_filter_bank_new(ptr::null(), 0.0, &mut handle), EgtStatus::Ok);
        let mut out = [0.0; EGT_SIGMA_FLAT_LEN];
        assert_eq!(egt_filter_bank_step(handle, 0.02, rot.as_ptr(), trans.as_ptr(), out.as_mut_ptr()), EgtStatus::NotInitialized);
        native.step_bank(0.02, &rel).unwrap();

        for k in 1..60 {
            if k % 10 == 0 {
                let stamp = native.stamp() - 0.1;
                let m = measurement(Vec3::new(0.1, 0.0, 1.5 + 0.01 * k as f64));
                native.ingest_measurement(&m, stamp, &native_cam).unwrap();
                let mut replayed = u32::MAX;
                assert_eq!(egt_filter_bank_ingest(handle, m.to_flat().as_ptr(), stamp, &cam, &mut replayed), EgtStatus::Ok);
                assert_eq!(replayed, 5);
            }
            let est = native.step_bank(0.02, &rel).unwrap();
            let status = egt_filter_bank_step(handle, 0.02, rot.as_ptr(), trans.as_ptr(), out.as_mut_ptr());
            match est {
                Some(e) => {
                    assert_eq!(status, EgtStatus::Ok);
                    assert_eq!(out, e.to_flat());
                }
                None => assert_eq!(status, EgtStatus::NotInitialized),
            }
        }
        assert_eq!(egt_filter_bank_stamp(handle), native.stamp());
        let mut est = [0.0; EGT_SIGMA_FLAT_LEN];
        assert_eq!(egt_filter_bank_estimate(handle, est.as_mut_ptr()), EgtStatus::Ok);
        assert_eq!(est, native.estimate().unwrap().to_flat());
        egt_filter_bank_free(handle);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut handle = ptr::null_mut();
    unsafe {
        let mut cfg = egt_filter_config_default();
        cfg.sigma_z = -1.0;
        assert_eq!(egt_filter_bank_new(&cfg, 0.0, &mut handle), EgtStatus::InvalidConfig);
        assert!(handle.is_null());
        assert!(last_error().contains("sigma_z"));

        assert_eq!(egt_filter_bank_new(ptr::null(), 0.0, ptr::null_mut()), EgtStatus::NullPointer);
        assert!(last_error().contains("out"));

        assert_eq!(egt_filter_bank_new(ptr::null(), 0.0, &mut handle), EgtStatus::Ok);
        assert!(egt_last_error_message().is_null());
        let mut out = [0.0; EGT_SIGMA_FLAT_LEN];
        assert_eq!(egt_filter_bank_estimate(handle, out.as_mut_ptr()), EgtStatus::NotInitialized);

        let skew = [1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let zero = [0.0; 3];
        assert_eq!(egt_filter_bank_step(handle, 0.02, skew.as_ptr(), zero.as_ptr(), out.as_mut_ptr()), EgtStatus::InvalidArgument);
        assert!(last_error().contains("orthonormal"));

        let m = measurement(Vec3::new(0.0, 0.0, 1.0)).to_flat();
        let cam = egt_camera_default();
        assert_eq!(egt_filter_bank_ingest(handle, m.as_ptr(), 5.0, &cam, ptr::null_mut()), EgtStatus::InvalidArgument);
        assert!(last_error().contains("ahead"));

        let ident = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        for _ in 0..40 {
            egt_filter_bank_step(handle, 0.02, ident.as_ptr(), zero.as_ptr(), ptr::null_mut());
        }
        assert_eq!(egt_filter_bank_ingest(handle, m.as_ptr(), 0.0, &cam, ptr::null_mut()), EgtStatus::Stale);

        let mut bad = cam;
        bad.fx = 0.0;
        assert_eq!(egt_filter_bank_ingest(handle, m.as_ptr(), 0.7, &bad, ptr::null_mut()), EgtStatus::InvalidConfig);
        egt_filter_bank_free(handle);
        egt_filter_bank_free(ptr::null_mut());
    }
}

#[test]
fn sigma_points_match_native() {
    let pts = [
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(0.3, 0.0, 1.1),
        Vec3::new(0.0, 0.1, 0.9),
        Vec3::new(-0.2, -0.05, 1.2),
        Vec3::new(0.1, 0.2, 1.0),
    ];
    let flat: Vec<f64> = pts.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
    let mut out = [0.0; EGT_SIGMA_FLAT_LEN];
    unsafe {
        assert_eq!(egt_sigma_points(flat.as_ptr(), ptr::null(), pts.len(), 1.0, out.as_mut_ptr()), EgtStatus::Ok);
        assert_eq!(out, sigma_points_uniform(&pts, 1.0).unwrap().unwrap().to_flat());
        let ones = [1.0; 5];
        let mut weighted = [0.0; EGT_SIGMA_FLAT_LEN];
        assert_eq!(egt_sigma_points(flat.as_ptr(), ones.as_ptr(), 5, 1.0, weighted.as_mut_ptr()), EgtStatus::Ok);
        assert_eq!(weighted, out);
        assert_eq!(egt_sigma_points(flat.as_ptr(), ptr::null(), 0, 1.0, out.as_mut_ptr()), EgtStatus::Empty);
        assert_eq!(egt_sigma_points(flat.as_ptr(), ptr::null(), 5, -1.0, out.as_mut_ptr()), EgtStatus::InvalidArgument);
    }
}

#[test]
fn cloud_culls_back_faces() {
    // Two points facing the camera and one facing away.
    let pts = [0.0, 0.0, 2.0, 0.1, 0.0, 2.0, 0.0, 0.1, 2.5];
    let normals = [0.0, 0.0, -1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 1.0];
    let cam = egt_camera_default();
    let mut out = [0.0; EGT_SIGMA_FLAT_LEN];
    unsafe {
        assert_eq!(egt_sigma_points_from_cloud(pts.as_ptr(), normals.as_ptr(), 3, &cam, 1.0, out.as_mut_ptr()), EgtStatus::Ok);
        // Solid-angle weights 2/|p|^3; the back-facing point contributes nothing.
        let (w0, w1) = (2.0 / 8.0, 2.0 / 4.01f64.powf(1.5));
        assert!((out[0] - 0.1 * w1 / (w0 + w1)).abs() < 1e-12);
        assert!(out[1].abs() < 1e-12 && (out[2] - 2.0).abs() < 1e-12);
        let away = [0.0, 0.0, 1.0];
        assert_eq!(egt_sigma_points_from_cloud(pts.as_ptr(), away.as_ptr(), 1, &cam, 1.0, out.as_mut_ptr()), EgtStatus::Empty);
        let not_unit = [0.0, 0.0, -2.0];
        assert_eq!(egt_sigma_points_from_cloud(pts.as_ptr(), not_unit.as_ptr(), 1, &cam, 1.0, out.as_mut_ptr()), EgtStatus::InvalidArgument);
    }
}

#[test]
fn asc_probability_matches_native() {
    let cfg = AscConfig::default();
    for rho in [0.0, 0.3, 1.0] {
        for (c, r) in [(EgtInitType::NearOptimal, InitType::NearOptimal), (EgtInitType::FailureReplay, InitType::FailureReplay)] {
            let mut p = f64::NAN;
            assert_eq!(unsafe { egt_asc_probability(rho, c, &mut p) }, EgtStatus::Ok);
            assert_eq!(p, asc_probability(rho, r, &cfg).unwrap());
        }
    }
    let mut p = 0.0;
    assert_eq!(unsafe { egt_asc_probability(1.5, EgtInitType::NearOptimal, &mut p) }, EgtStatus::InvalidArgument);
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(egt_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// Compiles `c/smoke.c` against the generated header and the static library.
#[test]
fn c_program_links_against_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // The test binary lives in `<target>/<profile>/deps`; the library one level up.
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = Some(profile_dir.join("libegotrack_ffi.a")).filter(|p| p.is_file());
    let Some(lib) = lib else {
        panic!("static library not found in {}", profile_dir.display());
    };
    let exe = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("egt_smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("cc runs");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
