//! C ABI over the egotrack filter bank, sigma-point extraction and the
//! curriculum schedule.
//!
//! Every fallible call returns an [`EgtStatus`]; on failure the message is
//! available from [`egt_last_error_message`] on the same thread. Sigma-point
//! sets cross the boundary as 21 doubles: seven points of `x, y, z`, centroid
//! first, then the `+/-` pairs along each principal axis. Rotations are 3×3
//! row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use egotrack::estimator::{FilterBank, FilterConfig, IngestOutcome, LatePolicy};
use egotrack::geometry::{
    extract_sigma_points, sigma_points_from_cloud, sigma_points_uniform, weighted_pca, CameraModel, Mat3,
    RigidTransform, SigmaPointSet, SurfacePointCloud, Vec3, SIGMA_COUNT,
};
use egotrack::tasklogic::{asc_probability, AscConfig, InitType};

/// Doubles in a flattened sigma-point set.
pub const EGT_SIGMA_FLAT_LEN: usize = 21;
const _: () = assert!(EGT_SIGMA_FLAT_LEN == 3 * SIGMA_COUNT);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    /// The bank has not received a measurement yet.
    NotInitialized = 4,
    /// The measurement is older than the snapshot history and was dropped.
    Stale = 5,
    /// Nothing to summarize, e.g. no visible points.
    Empty = 6,
    Numerical = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgtLatePolicy {
    Replay = 0,
    InPlace = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgtInitType {
    NearOptimal = 0,
    FailureReplay = 1,
}

/// Pinhole intrinsics, image size and near plane.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgtCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub near_z: f64,
}

/// Filter parameters. A non-positive `innovation_gate` disables the gate.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgtFilterConfig {
    pub q_pos: f64,
    pub q_vel: f64,
    pub sigma_u: f64,
    pub sigma_v: f64,
    pub sigma_z: f64,
    pub p0_pos: f64,
    pub p0_vel: f64,
    pub innovation_gate: f64,
    pub history_len: u32,
    pub late_policy: EgtLatePolicy,
}

/// Opaque filter bank. Create with [`egt_filter_bank_new`], release with
/// [`egt_filter_bank_free`].
pub struct EgtFilterBank {
    bank: FilterBank,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(EgtStatus, String);

impl Failure {
    fn new(status: EgtStatus, msg: impl Into<String>) -> Self {
        Self(status, msg.into())
    }
}

impl From<egotrack::estimator::EstimatorError> for Failure {
    fn from(e: egotrack::estimator::EstimatorError) -> Self {
        use egotrack::estimator::EstimatorError as E;
        let status = match e {
            E::InvalidConfig(_) => EgtStatus::InvalidConfig,
            E::SingularInnovation | E::InvalidMeasurementCovariance => EgtStatus::Numerical,
            _ => EgtStatus::InvalidArgument,
        };
        Self(status, e.to_string())
    }
}

impl From<egotrack::geometry::GeometryError> for Failure {
    fn from(e: egotrack::geometry::GeometryError) -> Self {
        use egotrack::geometry::GeometryError as G;
        let status = match e {
            G::Numerical(_) => EgtStatus::Numerical,
            G::InvalidCamera(_) => EgtStatus::InvalidConfig,
            _ => EgtStatus::InvalidArgument,
        };
        Self(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EgtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EgtStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            EgtStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(EgtStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn read_flat(p: *const f64) -> SigmaPointSet {
    let mut flat = [0.0; EGT_SIGMA_FLAT_LEN];
    flat.copy_from_slice(slice::from_raw_parts(p, EGT_SIGMA_FLAT_LEN));
    SigmaPointSet::from_flat(&flat)
}

unsafe fn write_flat(p: *mut f64, set: &SigmaPointSet) {
    slice::from_raw_parts_mut(p, EGT_SIGMA_FLAT_LEN).copy_from_slice(&set.to_flat());
}

unsafe fn read_points(p: *const f64, n: usize) -> Vec<Vec3> {
    slice::from_raw_parts(p, 3 * n)
        .chunks_exact(3)
        .map(|c| Vec3::new(c[0], c[1], c[2]))
        .collect()
}

impl From<EgtCamera> for CameraModel {
    fn from(c: EgtCamera) -> Self {
        CameraModel { fx: c.fx, fy: c.fy, cx: c.cx, cy: c.cy, width: c.width, height: c.height, near_z: c.near_z }
    }
}

impl From<CameraModel> for EgtCamera {
    fn from(c: CameraModel) -> Self {
        EgtCamera { fx: c.fx, fy: c.fy, cx: c.cx, cy: c.cy, width: c.width, height: c.height, near_z: c.near_z }
    }
}

impl From<&FilterConfig> for EgtFilterConfig {
    fn from(c: &FilterConfig) -> Self {
        EgtFilterConfig {
            q_pos: c.q_pos,
            q_vel: c.q_vel,
            sigma_u: c.sigma_u,
            sigma_v: c.sigma_v,
            sigma_z: c.sigma_z,
            p0_pos: c.p0_pos,
            p0_vel: c.p0_vel,
            innovation_gate: c.innovation_gate.unwrap_or(0.0),
            history_len: c.history_len.try_into().unwrap_or(u32::MAX),
            late_policy: match c.late_policy {
                LatePolicy::Replay => EgtLatePolicy::Replay,
                LatePolicy::InPlace => EgtLatePolicy::InPlace,
            },
        }
    }
}

impl From<&EgtFilterConfig> for FilterConfig {
    fn from(c: &EgtFilterConfig) -> Self {
        FilterConfig {
            q_pos: c.q_pos,
            q_vel: c.q_vel,
            sigma_u: c.sigma_u,
            sigma_v: c.sigma_v,
            sigma_z: c.sigma_z,
            p0_pos: c.p0_pos,
            p0_vel: c.p0_vel,
            innovation_gate: (c.innovation_gate > 0.0).then_some(c.innovation_gate),
            history_len: c.history_len as usize,
            late_policy: match c.late_policy {
                EgtLatePolicy::Replay => LatePolicy::Replay,
                EgtLatePolicy::InPlace => LatePolicy::InPlace,
            },
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn egt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn egt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn egt_camera_default() -> EgtCamera {
    CameraModel::default().into()
}

#[no_mangle]
pub extern "C" fn egt_filter_config_default() -> EgtFilterConfig {
    (&FilterConfig::default()).into()
}

/// Creates a bank whose clock starts at `start_stamp` seconds. A null
/// `config` selects the defaults.
///
/// # Safety
/// `config` is null or points to a valid config; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn egt_filter_bank_new(
    config: *const EgtFilterConfig,
    start_stamp: f64,
    out: *mut *mut EgtFilterBank,
) -> EgtStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = std::ptr::null_mut();
        let cfg = if config.is_null() { FilterConfig::default() } else { (&*config).into() };
        if !start_stamp.is_finite() {
            return Err(Failure::new(EgtStatus::InvalidArgument, "start_stamp must be finite"));
        }
        let bank = FilterBank::new(cfg, start_stamp)?;
        *out = Box::into_raw(Box::new(EgtFilterBank { bank }));
        Ok(())
    })
}

/// Releases a bank. Null is ignored.
///
/// # Safety
/// `bank` is null or was returned by [`egt_filter_bank_new`] and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn egt_filter_bank_free(bank: *mut EgtFilterBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// Current filter clock in seconds, NaN for a null handle.
///
/// # Safety
/// `bank` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn egt_filter_bank_stamp(bank: *const EgtFilterBank) -> f64 {
    bank.as_ref().map_or(f64::NAN, |b| b.bank.stamp())
}

/// Advances one tick of `dt` seconds with relative camera motion
/// `C_prev → C_now` given as `rotation` (9, row-major) and `translation` (3).
/// When the bank is initialized the new estimate is written to `out_points`
/// (21, may be null); otherwise `NotInitialized` is returned after the clock
/// has advanced.
///
/// # Safety
/// Pointers reference arrays of the stated lengths; `bank` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn egt_filter_bank_step(
    bank: *mut EgtFilterBank,
    dt: f64,
    rotation: *const f64,
    translation: *const f64,
    out_points: *mut f64,
) -> EgtStatus {
    guard(|| {
        non_null(bank, "bank")?;
        non_null(rotation, "rotation")?;
        non_null(translation, "translation")?;
        let r = Mat3::from_row_slice(slice::from_raw_parts(rotation, 9));
        let t = Vec3::from_column_slice(slice::from_raw_parts(translation, 3));
        let rel = RigidTransform::new(r, t, "camera", "camera")?;
        match (*bank).bank.step_bank(dt, &rel)? {
            Some(est) => {
                if !out_points.is_null() {
                    write_flat(out_points, &est);
                }
                Ok(())
            }
            None => Err(Failure::new(EgtStatus::NotInitialized, "no measurement has been ingested")),
        }
    })
}

/// Applies a sigma-point measurement taken at `stamp`, replaying when it is
/// late. `out_replayed` (may be null) receives the number of replayed ticks.
///
/// # Safety
/// `points` holds 21 doubles; `camera` is valid; `bank` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn egt_filter_bank_ingest(
    bank: *mut EgtFilterBank,
    points: *const f64,
    stamp: f64,
    camera: *const EgtCamera,
    out_replayed: *mut u32,
) -> EgtStatus {
    guard(|| {
        non_null(bank, "bank")?;
        non_null(points, "points")?;
        non_null(camera, "camera")?;
        let set = read_flat(points);
        if set.points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Failure::new(EgtStatus::InvalidArgument, "measurement contains non-finite values"));
        }
        let cam: CameraModel = (*camera).into();
        cam.validate()?;
        match (*bank).bank.ingest_measurement(&set, stamp, &cam)? {
            IngestOutcome::Applied { replayed, .. } => {
                if !out_replayed.is_null() {
                    *out_replayed = replayed.try_into().unwrap_or(u32::MAX);
                }
                Ok(())
            }
            IngestOutcome::Stale => Err(Failure::new(
                EgtStatus::Stale,
                format!("measurement at {stamp} predates the snapshot history"),
            )),
        }
    })
}

/// Writes the current estimate (21 doubles).
///
/// # Safety
/// `out_points` holds 21 doubles; `bank` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn egt_filter_bank_estimate(bank: *const EgtFilterBank, out_points: *mut f64) -> EgtStatus {
    guard(|| {
        non_null(bank, "bank")?;
        non_null(out_points, "out_points")?;
        let est = (*bank)
            .bank
            .estimate()
            .ok_or_else(|| Failure::new(EgtStatus::NotInitialized, "no measurement has been ingested"))?;
        write_flat(out_points, &est);
        Ok(())
    })
}

/// Sigma points of `count` points (3 doubles each) with uniform weights, or
/// with `weights` when it is non-null.
///
/// # Safety
/// `points` holds `3 * count` doubles, `weights` null or `count` doubles,
/// `out_points` 21 doubles.
#[no_mangle]
pub unsafe extern "C" fn egt_sigma_points(
    points: *const f64,
    weights: *const f64,
    count: usize,
    alpha: f64,
    out_points: *mut f64,
) -> EgtStatus {
    guard(|| {
        non_null(points, "points")?;
        non_null(out_points, "out_points")?;
        if count == 0 {
            return Err(Failure::new(EgtStatus::Empty, "no points"));
        }
        let pts = read_points(points, count);
        let set = if weights.is_null() {
            sigma_points_uniform(&pts, alpha)?.ok_or_else(|| Failure::new(EgtStatus::Empty, "no points"))?
        } else {
            let w = slice::from_raw_parts(weights, count);
            extract_sigma_points(&weighted_pca(&pts, w)?, alpha)?
        };
        write_flat(out_points, &set);
        Ok(())
    })
}

/// Full perception step on a camera-frame surface cloud with unit normals:
/// visibility culling, solid-angle weighting, PCA and sigma extraction.
/// Returns `Empty` when nothing is visible.
///
/// # Safety
/// `points` and `normals` hold `3 * count` doubles, `camera` is valid,
/// `out_points` holds 21 doubles.
#[no_mangle]
pub unsafe extern "C" fn egt_sigma_points_from_cloud(
    points: *const f64,
    normals: *const f64,
    count: usize,
    camera: *const EgtCamera,
    alpha: f64,
    out_points: *mut f64,
) -> EgtStatus {
    guard(|| {
        non_null(points, "points")?;
        non_null(normals, "normals")?;
        non_null(camera, "camera")?;
        non_null(out_points, "out_points")?;
        let cam: CameraModel = (*camera).into();
        cam.validate()?;
        let cloud = SurfacePointCloud::new(read_points(points, count), read_points(normals, count), "camera")?;
        let set = sigma_points_from_cloud(&cloud, &cam, alpha)?
            .ok_or_else(|| Failure::new(EgtStatus::Empty, "no visible points"))?;
        write_flat(out_points, &set);
        Ok(())
    })
}

/// Curriculum sampling probability at success rate `rho` under the default
/// schedule.
///
/// # Safety
/// `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn egt_asc_probability(rho: f64, init_type: EgtInitType, out: *mut f64) -> EgtStatus {
    guard(|| {
        non_null(out, "out")?;
        let kind = match init_type {
            EgtInitType::NearOptimal => InitType::NearOptimal,
            EgtInitType::FailureReplay => InitType::FailureReplay,
        };
        *out = asc_probability(rho, kind, &AscConfig::default())
            .map_err(|e| Failure::new(EgtStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}
