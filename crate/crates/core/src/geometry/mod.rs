//! Rigid-body and projective primitives.
//!
//! Poses are stored TUM-style: `rotation` is the camera-to-world orientation
//! and `translation` is the camera center in the world frame, so a world
//! point `X` lands in camera coordinates as `Rᵀ(X − t)`. Trajectory
//! quaternions map onto this directly, and translation differences between
//! two poses are physical distances between camera centers.
//!
//! Homographies map query pixels to reference pixels throughout the crate.
//! The two constructors mirror the alignment scheme: a rotation-induced
//! homography `K₁·R·K₂⁻¹` that is valid at any scene depth when the relative
//! translation vanishes, and a plane-induced homography
//! `K₁·(R + (1/d)·T·Nᵀ)·K₂⁻¹` that is exact for pixels imaging the plane.
//! Both evaluate the relative motion `(R, T)` in the reference camera frame,
//! which keeps them exact for arbitrary pose pairs; when the reference pose
//! is the world origin this reduces to the world-frame products `R₂R₁ᵀ` and
//! `T₂ − T₁` reported by [`relative_motion`].

mod warp;

pub use warp::{warp_image, WarpOutput};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Tolerance for pose orthonormality checks.
const POSE_TOL: f64 = 1e-9;
/// A homography with |det| at or below this is treated as singular.
const SINGULAR_TOL: f64 = 1e-12;
/// Homogeneous scale below this maps a point to infinity.
const AT_INFINITY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("rotation is not orthonormal with determinant +1 (residual {0:.3e})")]
    InvalidRotation(f64),
    #[error("pose translation is not finite")]
    InvalidTranslation,
    #[error("intrinsics must have positive finite focal lengths and finite principal point")]
    InvalidIntrinsics,
    #[error("matrix is singular (|det| = {0:.3e})")]
    Singular(f64),
    #[error("plane normal must be a unit vector (norm {0})")]
    InvalidPlaneNormal(f64),
    #[error("plane depth must be positive and finite (got {0})")]
    InvalidPlaneDepth(f64),
    #[error("camera center lies on the plane (effective depth {0:.3e})")]
    DegeneratePlane(f64),
    #[error("point maps to infinity (|w| = {0:.3e})")]
    AtInfinity(f64),
    #[error("pixel coordinates are not finite")]
    NonFinitePoint,
}

/// Subpixel image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    /// Euclidean distance to another point.
    pub fn distance(&self, other: &PixelPoint) -> f64 {
        ((self.u - other.u).powi(2) + (self.v - other.v).powi(2)).sqrt()
    }
}

impl From<(f64, f64)> for PixelPoint {
    fn from((u, v): (f64, f64)) -> Self {
        Self { u, v }
    }
}

/// Rigid camera pose: camera-to-world orientation plus camera center.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    /// Validates orthonormality (det +1 within 1e-9) and finiteness.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let residual = orthonormality_residual(&rotation);
        if residual > POSE_TOL {
            return Err(GeometryError::InvalidRotation(residual));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::InvalidTranslation);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera-to-world orientation.
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    /// Camera center in the world frame.
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// World point expressed in this camera's frame: `Rᵀ(X − t)`.
    pub fn world_to_camera(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (point - self.translation)
    }

    /// Camera-frame point expressed in the world frame: `R·x + t`.
    pub fn camera_to_world(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }
}

fn orthonormality_residual(r: &Matrix3<f64>) -> f64 {
    if !r.iter().all(|c| c.is_finite()) {
        return f64::INFINITY;
    }
    let gram = r.transpose() * r - Matrix3::identity();
    let gram_residual = gram.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    gram_residual.max((r.determinant() - 1.0).abs())
}

/// Pinhole camera intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        let focals_ok = fx.is_finite() && fy.is_finite() && fx > 0.0 && fy > 0.0;
        if !focals_ok || !cx.is_finite() || !cy.is_finite() {
            return Err(GeometryError::InvalidIntrinsics);
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Projects a camera-frame point to pixel coordinates.
    pub fn project(&self, point: &Vector3<f64>) -> Result<PixelPoint, GeometryError> {
        if point.z.abs() < AT_INFINITY_TOL {
            return Err(GeometryError::AtInfinity(point.z.abs()));
        }
        Ok(PixelPoint::new(
            self.fx * point.x / point.z + self.cx,
            self.fy * point.y / point.z + self.cy,
        ))
    }
}

/// A 3×3 projective map between pixel planes, stored normalized.
///
/// Normalization makes the scale factor concrete: the bottom-right entry is
/// forced to 1 when its magnitude exceeds 1e-9, otherwise the matrix is
/// scaled to unit Frobenius norm with a deterministic sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    matrix: Matrix3<f64>,
}

impl Homography {
    /// Builds a homography from any nonsingular matrix, normalizing scale.
    pub fn from_matrix(matrix: Matrix3<f64>) -> Result<Self, GeometryError> {
        if !matrix.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::Singular(0.0));
        }
        let det = matrix.determinant();
        if det.abs() <= SINGULAR_TOL {
            return Err(GeometryError::Singular(det.abs()));
        }
        Ok(Self {
            matrix: normalize_scale(matrix),
        })
    }

    pub fn identity() -> Self {
        Self {
            matrix: Matrix3::identity(),
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = self
            .matrix
            .try_inverse()
            .ok_or(GeometryError::Singular(self.matrix.determinant().abs()))?;
        Self::from_matrix(inv)
    }

    /// Row-major flattening, handy for record files and bindings.
    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.matrix;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn from_row_major(values: &[f64; 9]) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::from_row_slice(values))
    }
}

fn normalize_scale(matrix: Matrix3<f64>) -> Matrix3<f64> {
    let corner = matrix[(2, 2)];
    if corner.abs() > 1e-9 {
        return matrix / corner;
    }
    let scaled = matrix / matrix.norm();
    // Deterministic sign: first entry with appreciable magnitude is positive.
    let lead = scaled
        .transpose() // row-major iteration order
        .iter()
        .copied()
        .find(|c| c.abs() > 1e-12)
        .unwrap_or(1.0);
    if lead < 0.0 {
        -scaled
    } else {
        scaled
    }
}

/// Plane in the reference camera frame: unit normal and positive depth, so
/// on-plane points satisfy `Nᵀx = d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneParams {
    normal: Vector3<f64>,
    depth: f64,
}

impl PlaneParams {
    pub fn new(normal: Vector3<f64>, depth: f64) -> Result<Self, GeometryError> {
        let norm = normal.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidPlaneNormal(norm));
        }
        if !depth.is_finite() || depth <= 0.0 {
            return Err(GeometryError::InvalidPlaneDepth(depth));
        }
        Ok(Self {
            normal: normal / norm,
            depth,
        })
    }

    pub fn normal(&self) -> &Vector3<f64> {
        &self.normal
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }
}

/// Relative motion of the query pose with respect to the reference pose,
/// expressed in the world frame: `(R₂R₁ᵀ, T₂ − T₁)`.
///
/// The returned rotation reconstructs the query orientation as `R·R₁ = R₂`
/// and the translation as `T + T₁ = T₂`.
pub fn relative_motion(reference: &Pose, query: &Pose) -> (Matrix3<f64>, Vector3<f64>) {
    (
        query.rotation * reference.rotation.transpose(),
        query.translation - reference.translation,
    )
}

/// Relative camera motion expressed in the reference camera frame: the map
/// taking query-camera coordinates to reference-camera coordinates.
fn relative_motion_in_reference_frame(
    reference: &Pose,
    query: &Pose,
) -> (Matrix3<f64>, Vector3<f64>) {
    let r1t = reference.rotation.transpose();
    (
        r1t * query.rotation,
        r1t * (query.translation - reference.translation),
    )
}

/// Rotation-induced homography mapping query pixels to reference pixels,
/// `K₁·R·K₂⁻¹` with `R` the relative rotation. Valid at any scene depth when
/// the relative translation is negligible.
pub fn rotation_homography(
    k1: &Intrinsics,
    k2: &Intrinsics,
    reference: &Pose,
    query: &Pose,
) -> Result<Homography, GeometryError> {
    let (rotation, _) = relative_motion_in_reference_frame(reference, query);
    Homography::from_matrix(k1.matrix() * rotation * k2.inverse_matrix())
}

/// Plane-induced homography mapping query pixels to reference pixels,
/// `K₁·(R + (1/d)·T·Nᵀ)·K₂⁻¹`. Exact only for pixels imaging the plane.
///
/// The plane is given in the reference camera frame and re-expressed in the
/// query frame internally, where the closed form is exact for any pose pair.
pub fn planar_homography_from_motion(
    k1: &Intrinsics,
    k2: &Intrinsics,
    reference: &Pose,
    query: &Pose,
    plane: &PlaneParams,
) -> Result<Homography, GeometryError> {
    let (rotation, translation) = relative_motion_in_reference_frame(reference, query);
    // Plane in the query camera frame.
    let normal_q = rotation.transpose() * plane.normal;
    let depth_q = plane.depth - plane.normal.dot(&translation);
    if depth_q.abs() < 1e-9 {
        return Err(GeometryError::DegeneratePlane(depth_q.abs()));
    }
    let core = rotation + translation * normal_q.transpose() / depth_q;
    Homography::from_matrix(k1.matrix() * core * k2.inverse_matrix())
}

/// Applies a homography to a pixel and dehomogenizes.
pub fn apply_homography(h: &Homography, p: &PixelPoint) -> Result<PixelPoint, GeometryError> {
    if !p.is_finite() {
        return Err(GeometryError::NonFinitePoint);
    }
    let m = h.matrix();
    let w = m[(2, 0)] * p.u + m[(2, 1)] * p.v + m[(2, 2)];
    if w.abs() < AT_INFINITY_TOL {
        return Err(GeometryError::AtInfinity(w.abs()));
    }
    Ok(PixelPoint::new(
        (m[(0, 0)] * p.u + m[(0, 1)] * p.v + m[(0, 2)]) / w,
        (m[(1, 0)] * p.u + m[(1, 1)] * p.v + m[(1, 2)]) / w,
    ))
}

/// Composes two homographies: applying the result equals applying `inner`
/// first and `outer` second.
pub fn compose(outer: &Homography, inner: &Homography) -> Result<Homography, GeometryError> {
    Homography::from_matrix(outer.matrix() * inner.matrix())
}
