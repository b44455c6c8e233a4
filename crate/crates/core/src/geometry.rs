//! Frames, pinhole camera, back-face visibility, solid-angle weighting,
//! weighted PCA and sigma-point extraction.
//!
//! Camera frame convention: +Z is the optical axis pointing into the scene,
//! +X points right and +Y points down.

use nalgebra::{Matrix3, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance on `RᵀR − I` and `det R − 1` for a valid rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Default minimum depth accepted by the field-of-view test (m).
pub const DEFAULT_NEAR_Z: f64 = 0.05;

/// Number of points in a [`SigmaPointSet`].
pub const SIGMA_COUNT: usize = 7;

/// Eigenvalues more negative than this are reported instead of clamped.
pub const NEGATIVE_EIGENVALUE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("frame mismatch: expected `{expected}`, got `{actual}`")]
    FrameMismatch { expected: String, actual: String },
    #[error("rotation is not orthonormal with det +1 (error {0:e})")]
    NonOrthonormalRotation(f64),
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("depth {depth} is below the near plane {near_z}")]
    InvalidDepth { depth: f64, near_z: f64 },
    #[error("points and normals differ in length ({points} vs {normals})")]
    LengthMismatch { points: usize, normals: usize },
    #[error("normal {index} is not unit length (norm {norm})")]
    NonUnitNormal { index: usize, norm: f64 },
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
    #[error("invalid weight {value} at index {index}")]
    InvalidWeight { index: usize, value: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("sigma scale must be positive, got {0}")]
    InvalidAlpha(f64),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Element of SE(3) mapping coordinates of `from_frame` into `to_frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
    from_frame: String,
    to_frame: String,
}

/// Largest deviation of `r` from a proper rotation, over `RᵀR − I` and `det R − 1`.
pub fn rotation_error(r: &Mat3) -> f64 {
    let ortho = (r.transpose() * r - Mat3::identity()).abs().max();
    let det = (r.determinant() - 1.0).abs();
    ortho.max(det)
}

/// Rotation matrix for an axis-angle (rotation vector) via Rodrigues' formula.
pub fn rotation_from_axis_angle(rotvec: &Vec3) -> Mat3 {
    let theta = rotvec.norm();
    if theta < 1e-300 {
        return Mat3::identity();
    }
    let k = rotvec / theta;
    let kx = k.cross_matrix();
    Mat3::identity() + kx * theta.sin() + kx * kx * (1.0 - theta.cos())
}

impl RigidTransform {
    /// Builds a transform, rejecting rotations that are not proper orthonormal.
    pub fn new(
        rotation: Mat3,
        translation: Vec3,
        from_frame: impl Into<String>,
        to_frame: impl Into<String>,
    ) -> Result<Self> {
        let err = rotation_error(&rotation);
        if !(err <= ROTATION_TOLERANCE) {
            return Err(GeometryError::NonOrthonormalRotation(err));
        }
        Ok(Self::new_unchecked(rotation, translation, from_frame, to_frame))
    }

    /// Builds a transform without validating the rotation.
    ///
    /// Consumers that require a proper rotation re-check it with
    /// [`RigidTransform::validate`].
    pub fn new_unchecked(
        rotation: Mat3,
        translation: Vec3,
        from_frame: impl Into<String>,
        to_frame: impl Into<String>,
    ) -> Self {
        Self {
            rotation,
            translation,
            from_frame: from_frame.into(),
            to_frame: to_frame.into(),
        }
    }

    pub fn identity(frame: impl Into<String>) -> Self {
        let frame = frame.into();
        Self::new_unchecked(Mat3::identity(), Vec3::zeros(), frame.clone(), frame)
    }

    pub fn from_translation(
        translation: Vec3,
        from_frame: impl Into<String>,
        to_frame: impl Into<String>,
    ) -> Self {
        Self::new_unchecked(Mat3::identity(), translation, from_frame, to_frame)
    }

    pub fn from_axis_angle(
        rotvec: Vec3,
        translation: Vec3,
        from_frame: impl Into<String>,
        to_frame: impl Into<String>,
    ) -> Self {
        Self::new_unchecked(
            rotation_from_axis_angle(&rotvec),
            translation,
            from_frame,
            to_frame,
        )
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn from_frame(&self) -> &str {
        &self.from_frame
    }

    pub fn to_frame(&self) -> &str {
        &self.to_frame
    }

    pub fn validate(&self) -> Result<()> {
        let err = rotation_error(&self.rotation);
        if err <= ROTATION_TOLERANCE {
            Ok(())
        } else {
            Err(GeometryError::NonOrthonormalRotation(err))
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new_unchecked(
            rt,
            -(rt * self.translation),
            self.to_frame.clone(),
            self.from_frame.clone(),
        )
    }

    /// `self ∘ inner`: applies `inner` first, then `self`.
    pub fn compose(&self, inner: &RigidTransform) -> Result<Self> {
        if inner.to_frame != self.from_frame {
            return Err(GeometryError::FrameMismatch {
                expected: self.from_frame.clone(),
                actual: inner.to_frame.clone(),
            });
        }
        Ok(Self::new_unchecked(
            self.rotation * inner.rotation,
            self.rotation * inner.translation + self.translation,
            inner.from_frame.clone(),
            self.to_frame.clone(),
        ))
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }
}

/// Pinhole intrinsics plus image bounds and a near plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_near_z")]
    pub near_z: f64,
}

fn default_near_z() -> f64 {
    DEFAULT_NEAR_Z
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
            near_z: DEFAULT_NEAR_Z,
        }
    }
}

/// Result of projecting a camera-frame point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Vector2<f64>,
    pub in_fov: bool,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32, near_z: f64) -> Result<Self> {
        let cam = Self { fx, fy, cx, cy, width, height, near_z };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.fx) || !positive(self.fy) {
            return Err(GeometryError::InvalidCamera("focal lengths must be positive".into()));
        }
        if !positive(self.near_z) {
            return Err(GeometryError::InvalidCamera("near_z must be positive".into()));
        }
        if self.width < 1 || self.height < 1 {
            return Err(GeometryError::InvalidCamera("image size must be at least 1x1".into()));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(GeometryError::InvalidCamera("principal point must be finite".into()));
        }
        Ok(())
    }

    /// Pinhole projection with the field-of-view test.
    ///
    /// Points closer than `near_z` (including points behind the camera) are
    /// reported out of view; their pixel is computed with the depth clamped
    /// to `near_z` so it stays finite.
    pub fn project_point(&self, p: &Vec3) -> Projection {
        let in_front = p.z >= self.near_z;
        let z = if in_front { p.z } else { self.near_z };
        let pixel = Vector2::new(self.fx * p.x / z + self.cx, self.fy * p.y / z + self.cy);
        let in_image = pixel.x >= 0.0
            && pixel.x < self.width as f64
            && pixel.y >= 0.0
            && pixel.y < self.height as f64;
        Projection {
            pixel,
            in_fov: in_front && in_image,
        }
    }

    pub fn backproject_pixel(&self, pixel: &Vector2<f64>, depth: f64) -> Result<Vec3> {
        if !(depth >= self.near_z) {
            return Err(GeometryError::InvalidDepth { depth, near_z: self.near_z });
        }
        Ok(Vec3::new(
            (pixel.x - self.cx) * depth / self.fx,
            (pixel.y - self.cy) * depth / self.fy,
            depth,
        ))
    }
}

/// Surface samples with unit outward normals, expressed in `frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePointCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub frame: String,
}

impl SurfacePointCloud {
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>, frame: impl Into<String>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(GeometryError::LengthMismatch {
                points: points.len(),
                normals: normals.len(),
            });
        }
        for (index, n) in normals.iter().enumerate() {
            let norm = n.norm();
            if !((norm - 1.0).abs() <= 1e-6) {
                return Err(GeometryError::NonUnitNormal { index, norm });
            }
        }
        Ok(Self {
            points,
            normals,
            frame: frame.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Maps points by `Rp + t` and normals by `R`.
pub fn transform_points(cloud: &SurfacePointCloud, t: &RigidTransform) -> Result<SurfacePointCloud> {
    if cloud.frame != t.from_frame() {
        return Err(GeometryError::FrameMismatch {
            expected: t.from_frame().to_owned(),
            actual: cloud.frame.clone(),
        });
    }
    Ok(SurfacePointCloud {
        points: cloud.points.iter().map(|p| t.transform_point(p)).collect(),
        normals: cloud.normals.iter().map(|n| t.transform_vector(n)).collect(),
        frame: t.to_frame().to_owned(),
    })
}

/// Indices of points that face the camera (`n·p < 0`) and lie inside the
/// field of view, in input order.
pub fn compute_visible_set(cloud: &SurfacePointCloud, cam: &CameraModel) -> Vec<usize> {
    cloud
        .points
        .iter()
        .zip(&cloud.normals)
        .enumerate()
        .filter(|(_, (p, n))| n.dot(p) < 0.0 && cam.project_point(p).in_fov)
        .map(|(i, _)| i)
        .collect()
}

/// Per-point solid-angle weight `max(0, −n·p / ‖p‖³)`.
pub fn solid_angle_weights(points: &[Vec3], normals: &[Vec3]) -> Result<Vec<f64>> {
    if points.len() != normals.len() {
        return Err(GeometryError::LengthMismatch {
            points: points.len(),
            normals: normals.len(),
        });
    }
    points
        .iter()
        .zip(normals)
        .map(|(p, n)| {
            let r = p.norm();
            if r == 0.0 {
                return Err(GeometryError::Degenerate("zero-norm point has no solid angle"));
            }
            Ok((-n.dot(p) / (r * r * r)).max(0.0))
        })
        .collect()
}

/// Weighted centroid, eigenvalues (descending) and orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    pub centroid: Vec3,
    pub eigenvalues: [f64; 3],
    pub eigenvectors: [Vec3; 3],
}

impl PcaResult {
    /// `Σ λₖ eₖ eₖᵀ`.
    pub fn covariance(&self) -> Mat3 {
        (0..3).fold(Mat3::zeros(), |acc, k| {
            acc + self.eigenvectors[k] * self.eigenvectors[k].transpose() * self.eigenvalues[k]
        })
    }
}

/// Flips `v` so that its largest-magnitude component is positive; ties go to
/// the lowest index.
fn canonical_sign(v: Vec3) -> Vec3 {
    let mut best = 0;
    for i in 1..3 {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        -v
    } else {
        v
    }
}

pub fn weighted_covariance(points: &[Vec3], weights: &[f64]) -> Result<(Vec3, Mat3)> {
    if points.len() != weights.len() {
        return Err(GeometryError::LengthMismatch {
            points: points.len(),
            normals: weights.len(),
        });
    }
    for (index, &w) in weights.iter().enumerate() {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(GeometryError::InvalidWeight { index, value: w });
        }
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(GeometryError::Degenerate("total weight is zero"));
    }
    let centroid = points
        .iter()
        .zip(weights)
        .fold(Vec3::zeros(), |acc, (p, w)| acc + p * *w)
        / total;
    let cov = points
        .iter()
        .zip(weights)
        .fold(Mat3::zeros(), |acc, (p, w)| {
            let d = p - centroid;
            acc + d * d.transpose() * *w
        })
        / total;
    Ok((centroid, cov))
}

pub fn weighted_pca(points: &[Vec3], weights: &[f64]) -> Result<PcaResult> {
    let (centroid, cov) = weighted_covariance(points, weights)?;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    // Roundoff can push eigenvalues of a PSD matrix slightly negative.
    let floor = -64.0 * f64::EPSILON * cov.abs().max().max(f64::MIN_POSITIVE);
    let mut eigenvalues = [0.0; 3];
    let mut eigenvectors = [Vec3::zeros(); 3];
    for (slot, &k) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[k];
        if !lambda.is_finite() || lambda < floor {
            return Err(GeometryError::Numerical(format!(
                "covariance eigenvalue {lambda:e} is negative"
            )));
        }
        eigenvalues[slot] = lambda.max(0.0);
        eigenvectors[slot] = canonical_sign(eig.eigenvectors.column(k).into_owned().normalize());
    }
    Ok(PcaResult {
        centroid,
        eigenvalues,
        eigenvectors,
    })
}

/// Centroid plus ± offsets along the three principal axes.
///
/// Index 0 is the centroid; indices `2k−1, 2k` are the `+` and `−` points of
/// axis `k` (1-based, descending eigenvalue).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaPointSet {
    pub points: [Vec3; SIGMA_COUNT],
}

impl SigmaPointSet {
    pub fn new(points: [Vec3; SIGMA_COUNT]) -> Self {
        Self { points }
    }

    pub fn uniform(p: Vec3) -> Self {
        Self { points: [p; SIGMA_COUNT] }
    }

    pub fn centroid(&self) -> Vec3 {
        self.points[0]
    }

    /// Offset of the `+` point of `axis` (0-based) from the centroid.
    pub fn axis_offset(&self, axis: usize) -> Vec3 {
        self.points[2 * axis + 1] - self.points[0]
    }

    pub fn translated(&self, d: &Vec3) -> Self {
        Self {
            points: self.points.map(|p| p + d),
        }
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            points: self.points.map(|p| t.transform_point(&p)),
        }
    }

    /// Row-major `[x0, y0, z0, x1, …]`.
    pub fn to_flat(&self) -> [f64; 3 * SIGMA_COUNT] {
        let mut out = [0.0; 3 * SIGMA_COUNT];
        for (i, p) in self.points.iter().enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(p.as_slice());
        }
        out
    }

    pub fn from_flat(flat: &[f64; 3 * SIGMA_COUNT]) -> Self {
        let mut points = [Vec3::zeros(); SIGMA_COUNT];
        for (i, p) in points.iter_mut().enumerate() {
            *p = Vec3::new(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]);
        }
        Self { points }
    }
}

pub fn extract_sigma_points(pca: &PcaResult, alpha: f64) -> Result<SigmaPointSet> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(GeometryError::InvalidAlpha(alpha));
    }
    let mut points = [pca.centroid; SIGMA_COUNT];
    for k in 0..3 {
        let lambda = pca.eigenvalues[k];
        if lambda < -NEGATIVE_EIGENVALUE_TOLERANCE || lambda.is_nan() {
            return Err(GeometryError::Numerical(format!("eigenvalue {lambda:e} is negative")));
        }
        let offset = pca.eigenvectors[k] * (alpha * lambda.max(0.0).sqrt());
        points[2 * k + 1] = pca.centroid + offset;
        points[2 * k + 2] = pca.centroid - offset;
    }
    Ok(SigmaPointSet { points })
}

/// Visibility culling, solid-angle weighting, weighted PCA and sigma
/// extraction. `Ok(None)` means nothing is visible.
pub fn sigma_points_from_cloud(
    cloud: &SurfacePointCloud,
    cam: &CameraModel,
    alpha: f64,
) -> Result<Option<SigmaPointSet>> {
    let visible = compute_visible_set(cloud, cam);
    if visible.is_empty() {
        return Ok(None);
    }
    let points: Vec<Vec3> = visible.iter().map(|&i| cloud.points[i]).collect();
    let normals: Vec<Vec3> = visible.iter().map(|&i| cloud.normals[i]).collect();
    let weights = solid_angle_weights(&points, &normals)?;
    let pca = weighted_pca(&points, &weights)?;
    extract_sigma_points(&pca, alpha).map(Some)
}

/// Points without normals (for example back-projected from a mask): no
/// culling, uniform weights.
pub fn sigma_points_uniform(points: &[Vec3], alpha: f64) -> Result<Option<SigmaPointSet>> {
    if points.is_empty() {
        return Ok(None);
    }
    let weights = vec![1.0; points.len()];
    let pca = weighted_pca(points, &weights)?;
    extract_sigma_points(&pca, alpha).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cam() -> CameraModel {
        CameraModel::default()
    }

    fn close(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        (a - b).abs().max() <= tol
    }

    #[test]
    fn identity_transform_leaves_cloud_unchanged() {
        let cloud = SurfacePointCloud::new(
            vec![Vec3::new(1.0, 2.0, 3.0)],
            vec![Vec3::new(0.0, 0.0, -1.0)],
            "C",
        )
        .unwrap();
        let out = transform_points(&cloud, &RigidTransform::identity("C")).unwrap();
        assert_eq!(out, cloud);
    }

    #[test]
    fn translation_and_rotation_examples() {
        let cloud = SurfacePointCloud::new(
            vec![Vec3::new(0.0, 0.0, 1.0)],
            vec![Vec3::new(0.0, 0.0, -1.0)],
            "A",
        )
        .unwrap();
        let t = RigidTransform::from_translation(Vec3::new(0.0, 0.0, -0.1), "A", "B");
        let out = transform_points(&cloud, &t).unwrap();
        assert!(close(&out.points[0], &Vec3::new(0.0, 0.0, 0.9), 1e-15));
        assert_eq!(out.normals[0], cloud.normals[0]);
        assert_eq!(out.frame, "B");

        let cloud = SurfacePointCloud::new(
            vec![Vec3::new(1.0, 0.0, 2.0)],
            vec![Vec3::new(1.0, 0.0, 0.0)],
            "A",
        )
        .unwrap();
        let r = RigidTransform::from_axis_angle(Vec3::new(0.0, 0.0, PI), Vec3::zeros(), "A", "B");
        let out = transform_points(&cloud, &r).unwrap();
        assert!(close(&out.points[0], &Vec3::new(-1.0, 0.0, 2.0), 1e-12));
        assert!(close(&out.normals[0], &Vec3::new(-1.0, 0.0, 0.0), 1e-12));
    }

    #[test]
    fn frame_mismatch_is_rejected() {
        let cloud = SurfacePointCloud::new(vec![], vec![], "A").unwrap();
        let t = RigidTransform::identity("B");
        assert!(matches!(
            transform_points(&cloud, &t),
            Err(GeometryError::FrameMismatch { .. })
        ));
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let t = RigidTransform::from_axis_angle(
            Vec3::new(0.3, -0.2, 0.9),
            Vec3::new(1.0, 2.0, -3.0),
            "A",
            "B",
        );
        let id = t.inverse().compose(&t).unwrap();
        assert!((id.rotation() - Mat3::identity()).abs().max() < 1e-9);
        assert!(id.translation().abs().max() < 1e-9);
        assert_eq!(id.from_frame(), "A");
        assert_eq!(id.to_frame(), "A");
        assert!(t.compose(&t).is_err());
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let r = Mat3::identity() * 1.01;
        assert!(matches!(
            RigidTransform::new(r, Vec3::zeros(), "A", "B"),
            Err(GeometryError::NonOrthonormalRotation(_))
        ));
        let reflection = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(reflection, Vec3::zeros(), "A", "B").is_err());
    }

    #[test]
    fn projection_examples() {
        let c = cam();
        let p = c.project_point(&Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(p.pixel, Vector2::new(320.0, 240.0));
        assert!(p.in_fov);

        let behind = c.project_point(&Vec3::new(0.0, 0.0, -1.0));
        assert!(!behind.in_fov);
        assert!(behind.pixel.x.is_finite() && behind.pixel.y.is_finite());

        let right = c.project_point(&Vec3::new(1.0, 0.0, 1.0));
        assert_eq!(right.pixel.x, 820.0);
        assert!(!right.in_fov);
    }

    #[test]
    fn backprojection_examples() {
        let c = cam();
        let p = c.backproject_pixel(&Vector2::new(320.0, 240.0), 1.0).unwrap();
        assert_eq!(p, Vec3::new(0.0, 0.0, 1.0));
        let p = c.backproject_pixel(&Vector2::new(820.0, 240.0), 1.0).unwrap();
        assert_eq!(p, Vec3::new(1.0, 0.0, 1.0));
        assert!(matches!(
            c.backproject_pixel(&Vector2::new(0.0, 0.0), 0.01),
            Err(GeometryError::InvalidDepth { .. })
        ));
    }

    #[test]
    fn camera_validation() {
        assert!(CameraModel::new(0.0, 500.0, 0.0, 0.0, 10, 10, 0.05).is_err());
        assert!(CameraModel::new(500.0, 500.0, 0.0, 0.0, 0, 10, 0.05).is_err());
        assert!(CameraModel::new(500.0, 500.0, 0.0, 0.0, 10, 10, 0.0).is_err());
        assert!(CameraModel::new(500.0, 500.0, 0.0, 0.0, 1, 1, 0.05).is_ok());
    }

    #[test]
    fn visibility_examples() {
        let cloud = SurfacePointCloud::new(
            vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 1.0), Vec3::new(5.0, 0.0, 1.0)],
            vec![Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, -1.0)],
            "C",
        )
        .unwrap();
        assert_eq!(compute_visible_set(&cloud, &cam()), vec![0]);
    }

    #[test]
    fn solid_angle_examples() {
        let w = solid_angle_weights(
            &[Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 2.0), Vec3::new(0.0, 0.0, 1.0)],
            &[Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, 0.0, 1.0)],
        )
        .unwrap();
        assert_eq!(w, vec![1.0, 0.25, 0.0]);
        assert!(matches!(
            solid_angle_weights(&[Vec3::zeros()], &[Vec3::new(0.0, 0.0, -1.0)]),
            Err(GeometryError::Degenerate(_))
        ));
    }

    #[test]
    fn pca_examples() {
        let p = Vec3::new(0.3, -0.2, 1.5);
        let r = weighted_pca(&[p], &[1.0]).unwrap();
        assert_eq!(r.centroid, p);
        assert_eq!(r.eigenvalues, [0.0; 3]);

        let r = weighted_pca(&[Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)], &[1.0, 1.0]).unwrap();
        assert!(close(&r.centroid, &Vec3::zeros(), 1e-15));
        assert!((r.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!(r.eigenvalues[1].abs() < 1e-12 && r.eigenvalues[2].abs() < 1e-12);
        assert!(close(&r.eigenvectors[0], &Vec3::x(), 1e-12));

        let r = weighted_pca(&[Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)], &[3.0, 1.0]).unwrap();
        assert!(close(&r.centroid, &Vec3::new(0.5, 0.0, 0.0), 1e-15));
        assert!((r.eigenvalues[0] - 0.75).abs() < 1e-12);

        assert!(matches!(
            weighted_pca(&[Vec3::x()], &[0.0]),
            Err(GeometryError::Degenerate(_))
        ));
        assert!(weighted_pca(&[Vec3::x()], &[-1.0]).is_err());
    }

    #[test]
    fn eigenvector_sign_convention() {
        assert_eq!(canonical_sign(Vec3::new(0.1, -0.9, 0.2)), Vec3::new(-0.1, 0.9, -0.2));
        // tie between x and z resolves to x
        assert_eq!(canonical_sign(Vec3::new(-0.5, 0.0, 0.5)), Vec3::new(0.5, 0.0, -0.5));
    }

    #[test]
    fn sigma_examples() {
        let pca = PcaResult {
            centroid: Vec3::new(0.0, 0.0, 2.0),
            eigenvalues: [0.04, 0.01, 0.0025],
            eigenvectors: [Vec3::x(), Vec3::y(), Vec3::z()],
        };
        let s = extract_sigma_points(&pca, 1.0).unwrap();
        assert!(close(&s.axis_offset(0), &Vec3::new(0.2, 0.0, 0.0), 1e-15));
        assert!(close(&s.axis_offset(1), &Vec3::new(0.0, 0.1, 0.0), 1e-15));
        assert!(close(&s.axis_offset(2), &Vec3::new(0.0, 0.0, 0.05), 1e-15));
        assert!(close(&s.points[2], &Vec3::new(-0.2, 0.0, 2.0), 1e-15));

        let s15 = extract_sigma_points(&pca, 1.5).unwrap();
        assert_eq!(s15.centroid(), s.centroid());
        for k in 0..3 {
            assert!(close(&s15.axis_offset(k), &(s.axis_offset(k) * 1.5), 1e-15));
        }

        let flat = PcaResult { eigenvalues: [0.0; 3], ..pca.clone() };
        let s = extract_sigma_points(&flat, 1.0).unwrap();
        assert!(s.points.iter().all(|p| *p == flat.centroid));

        let tiny = PcaResult { eigenvalues: [0.04, 0.0, -1e-14], ..pca.clone() };
        assert!(extract_sigma_points(&tiny, 1.0).is_ok());
        let bad = PcaResult { eigenvalues: [0.04, 0.0, -1e-6], ..pca.clone() };
        assert!(matches!(extract_sigma_points(&bad, 1.0), Err(GeometryError::Numerical(_))));
        assert!(matches!(extract_sigma_points(&pca, 0.0), Err(GeometryError::InvalidAlpha(_))));
    }

    #[test]
    fn pipeline_edge_cases() {
        let back = SurfacePointCloud::new(
            vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.1, 0.0, 1.0)],
            vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 1.0)],
            "C",
        )
        .unwrap();
        assert_eq!(sigma_points_from_cloud(&back, &cam(), 1.0).unwrap(), None);

        let single = SurfacePointCloud::new(
            vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.1, 0.0, 1.0)],
            vec![Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, 0.0, 1.0)],
            "C",
        )
        .unwrap();
        let s = sigma_points_from_cloud(&single, &cam(), 1.0).unwrap().unwrap();
        assert!(s.points.iter().all(|p| *p == Vec3::new(0.0, 0.0, 1.0)));

        assert_eq!(sigma_points_uniform(&[], 1.0).unwrap(), None);
    }

    #[test]
    fn flat_layout_round_trip() {
        let mut pts = [Vec3::zeros(); SIGMA_COUNT];
        for (i, p) in pts.iter_mut().enumerate() {
            *p = Vec3::new(i as f64, 10.0 + i as f64, 20.0 + i as f64);
        }
        let s = SigmaPointSet::new(pts);
        let flat = s.to_flat();
        assert_eq!(&flat[3..6], &[1.0, 11.0, 21.0]);
        assert_eq!(SigmaPointSet::from_flat(&flat), s);
    }
}
