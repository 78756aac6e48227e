//! Camera geometry: pinhole intrinsics with radial-tangential distortion,
//! extrinsic poses, back-projection of pixel corners onto the z = 0
//! reference plane, and solid angles of spherical triangles and quads.
//!
//! The world frame is anchored to the reference plane: the plane is z = 0,
//! its surface normal is +Z, and cameras observe it from z > 0. A camera
//! looks along the +Z axis of its own frame, so the third column of the
//! camera-to-world rotation points towards the plane.
//!
//! Pixel (u, v) owns the square [u, u+1] x [v, v+1] in pixel-corner
//! coordinates: integer coordinates address corners, pixel centers sit at
//! half-integers, and the quads of adjacent pixels tile the sensor exactly.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold below which ray slopes and vertex dot products count as
/// degenerate. Far below any physically meaningful configuration.
pub const DEGENERACY_EPS: f64 = 1e-12;

/// Plane-quad corners must lie within this distance of z = 0.
pub const PLANE_Z_EPS: f64 = 1e-9;

const ORTHONORMALITY_EPS: f64 = 1e-10;
const UNDISTORT_MAX_ITERS: usize = 50;
const UNDISTORT_TOL_PX: f64 = 1e-8;
const GUARD_BAND_FRACTION: f64 = 0.1;

/// Rotation about the X axis.
pub fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Rotation about the Y axis.
pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Rotation about the Z axis.
pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Five-coefficient radial-tangential distortion, applied in normalized
/// image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
    pub k3: f64,
}

impl Distortion {
    pub fn new(k1: f64, k2: f64, p1: f64, p2: f64, k3: f64) -> Self {
        Self { k1, k2, p1, p2, k3 }
    }

    pub fn is_zero(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0 && self.p1 == 0.0 && self.p2 == 0.0 && self.k3 == 0.0
    }

    /// Forward model: ideal normalized coordinates to distorted ones.
    pub fn distort(&self, n: Vector2<f64>) -> Vector2<f64> {
        let (x, y) = (n.x, n.y);
        let r2 = x * x + y * y;
        let r4 = r2 * r2;
        let r6 = r4 * r2;
        let radial = 1.0 + self.k1 * r2 + self.k2 * r4 + self.k3 * r6;
        let dx = 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
        let dy = self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
        Vector2::new(x * radial + dx, y * radial + dy)
    }
}

/// Pinhole intrinsics plus distortion and sensor size in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub dist: Distortion,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        dist: Distortion,
    ) -> Result<Self> {
        let intr = Self { fx, fy, cx, cy, width, height, dist };
        intr.validate()?;
        Ok(intr)
    }

    /// Checks the structural invariants; loaders call this because serde
    /// bypasses [`CameraIntrinsics::new`].
    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("intrinsics must be finite"));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::invalid(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("sensor size must be nonzero"));
        }
        if self.cx <= 0.0 || self.cx >= self.width as f64 || self.cy <= 0.0 || self.cy >= self.height as f64 {
            return Err(Error::invalid(format!(
                "principal point ({}, {}) outside the {}x{} sensor",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_to_normalized(&self, p: Vector2<f64>) -> Vector2<f64> {
        Vector2::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy)
    }

    pub fn normalized_to_pixel(&self, n: Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * n.x + self.cx, self.fy * n.y + self.cy)
    }

    /// Ideal normalized coordinates to a distorted pixel position.
    pub fn distort_to_pixel(&self, n: Vector2<f64>) -> Vector2<f64> {
        self.normalized_to_pixel(self.dist.distort(n))
    }

    fn in_guard_band(&self, p: Vector2<f64>) -> bool {
        let gx = GUARD_BAND_FRACTION * self.width as f64;
        let gy = GUARD_BAND_FRACTION * self.height as f64;
        p.x >= -gx
            && p.x <= self.width as f64 + gx
            && p.y >= -gy
            && p.y <= self.height as f64 + gy
    }
}

/// Camera-to-world rotation and camera center, expressed in the
/// reference-plane frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    center: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        let mut dev: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((gram[(i, j)] - target).abs());
            }
        }
        if dev >= ORTHONORMALITY_EPS {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal (|R^T R - I| = {dev:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() >= ORTHONORMALITY_EPS {
            return Err(Error::invalid(format!(
                "rotation determinant {det} is not +1"
            )));
        }
        if !center.iter().all(|v| v.is_finite()) || center.z <= 0.0 {
            return Err(Error::invalid(format!(
                "camera center must be finite with z > 0 (got z = {})",
                center.z
            )));
        }
        Ok(Self { rotation, center })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn center(&self) -> &Vector3<f64> {
        &self.center
    }

    /// Pose with the optical axis pointing from `center` to `target`,
    /// rolled by `roll` about the optical axis. `target` must not be
    /// directly sideways along the world Y axis.
    pub fn look_at(center: Vector3<f64>, target: Vector3<f64>, roll: f64) -> Result<Self> {
        let forward = target - center;
        let norm = forward.norm();
        if norm < 1e-12 {
            return Err(Error::invalid("look_at target coincides with camera center"));
        }
        let f = forward / norm;
        let mut x = f.cross(&Vector3::y());
        if x.norm() < 1e-9 {
            x = f.cross(&Vector3::x());
        }
        let x = x.normalize();
        let y = f.cross(&x);
        let base = Matrix3::from_columns(&[x, y, f]);
        Self::new(base * rot_z(roll), center)
    }
}

/// Back-projected footprint of a pixel: four coplanar corners on z = 0,
/// counter-clockwise when viewed from +Z, plus their centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneQuad {
    corners: [Vector3<f64>; 4],
    centroid: Vector3<f64>,
}

impl PlaneQuad {
    pub fn new(mut corners: [Vector3<f64>; 4]) -> Result<Self> {
        for c in &corners {
            if !c.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid("quad corner is not finite"));
            }
            if c.z.abs() > PLANE_Z_EPS {
                return Err(Error::invalid(format!(
                    "quad corner off the reference plane (z = {:.3e})",
                    c.z
                )));
            }
        }
        let area = signed_area_xy(&corners);
        if area == 0.0 {
            return Err(Error::invalid("quad has zero area"));
        }
        if area < 0.0 {
            corners.reverse();
        }
        if segments_cross(corners[0], corners[1], corners[2], corners[3])
            || segments_cross(corners[1], corners[2], corners[3], corners[0])
        {
            return Err(Error::invalid("quad is self-intersecting"));
        }
        let centroid = (corners[0] + corners[1] + corners[2] + corners[3]) / 4.0;
        Ok(Self { corners, centroid })
    }

    pub fn corners(&self) -> &[Vector3<f64>; 4] {
        &self.corners
    }

    pub fn centroid(&self) -> &Vector3<f64> {
        &self.centroid
    }

    /// Planar area of the quad (shoelace over x, y).
    pub fn area(&self) -> f64 {
        signed_area_xy(&self.corners)
    }
}

fn signed_area_xy(c: &[Vector3<f64>; 4]) -> f64 {
    let mut sum = 0.0;
    for i in 0..4 {
        let a = c[i];
        let b = c[(i + 1) % 4];
        sum += a.x * b.y - b.x * a.y;
    }
    0.5 * sum
}

/// Strict crossing test for the open interiors of segments ab and cd.
fn segments_cross(a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>, d: Vector3<f64>) -> bool {
    let orient = |p: Vector3<f64>, q: Vector3<f64>, r: Vector3<f64>| {
        (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)
    };
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

/// Inverts the distortion model for one pixel position, returning ideal
/// normalized coordinates. Fixed-point iteration; converged when pushing
/// the estimate back through the forward model reproduces the input
/// within 1e-8 px.
pub fn undistort_pixel(p: Vector2<f64>, intr: &CameraIntrinsics) -> Result<Vector2<f64>> {
    if !intr.in_guard_band(p) {
        return Err(Error::PixelOutOfBounds { x: p.x, y: p.y });
    }
    let target = intr.pixel_to_normalized(p);
    let mut est = target;
    let mut residual = f64::INFINITY;
    for iteration in 1..=UNDISTORT_MAX_ITERS {
        let (x, y) = (est.x, est.y);
        let r2 = x * x + y * y;
        let r4 = r2 * r2;
        let radial = 1.0 + intr.dist.k1 * r2 + intr.dist.k2 * r4 + intr.dist.k3 * r4 * r2;
        if !radial.is_finite() || radial.abs() < 1e-12 {
            return Err(Error::UndistortNonConvergence {
                residual_px: residual,
                iterations: iteration,
            });
        }
        let dx = 2.0 * intr.dist.p1 * x * y + intr.dist.p2 * (r2 + 2.0 * x * x);
        let dy = intr.dist.p1 * (r2 + 2.0 * y * y) + 2.0 * intr.dist.p2 * x * y;
        est = Vector2::new((target.x - dx) / radial, (target.y - dy) / radial);
        if !est.x.is_finite() || !est.y.is_finite() {
            return Err(Error::UndistortNonConvergence {
                residual_px: f64::INFINITY,
                iterations: iteration,
            });
        }
        residual = (intr.distort_to_pixel(est) - p).norm();
        if residual <= UNDISTORT_TOL_PX {
            return Ok(est);
        }
    }
    Err(Error::UndistortNonConvergence {
        residual_px: residual,
        iterations: UNDISTORT_MAX_ITERS,
    })
}

/// Intersects the viewing ray through one (undistorted) pixel corner with
/// the z = 0 plane. The returned point has z = 0 exactly.
pub fn back_project_corner(
    p: Vector2<f64>,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
) -> Result<Vector3<f64>> {
    let n = undistort_pixel(p, intr)?;
    let ray = pose.rotation() * Vector3::new(n.x, n.y, 1.0);
    let r_hat = ray / ray.norm();
    if r_hat.z.abs() <= DEGENERACY_EPS {
        return Err(Error::RayParallelToPlane);
    }
    // The unique scale placing the intersection on z = 0.
    let lambda = -pose.center().z / r_hat.z;
    if lambda <= 0.0 {
        return Err(Error::IntersectionBehindCamera { lambda });
    }
    let mut point = pose.center() + lambda * r_hat;
    point.z = 0.0;
    Ok(point)
}

/// Back-projects four pixel-corner positions into a [`PlaneQuad`].
pub fn plane_quad(
    corners_px: &[Vector2<f64>; 4],
    intr: &CameraIntrinsics,
    pose: &CameraPose,
) -> Result<PlaneQuad> {
    let mut corners = [Vector3::zeros(); 4];
    for (slot, px) in corners.iter_mut().zip(corners_px.iter()) {
        *slot = back_project_corner(*px, intr, pose)?;
    }
    PlaneQuad::new(corners)
}

/// Footprint of integer pixel (u, v) on the reference plane.
pub fn pixel_quad(px: (u32, u32), intr: &CameraIntrinsics, pose: &CameraPose) -> Result<PlaneQuad> {
    let (u, v) = px;
    if u >= intr.width || v >= intr.height {
        return Err(Error::PixelOutOfBounds {
            x: u as f64,
            y: v as f64,
        });
    }
    let (uf, vf) = (u as f64, v as f64);
    plane_quad(
        &[
            Vector2::new(uf, vf),
            Vector2::new(uf + 1.0, vf),
            Vector2::new(uf + 1.0, vf + 1.0),
            Vector2::new(uf, vf + 1.0),
        ],
        intr,
        pose,
    )
}

/// Projects a world point into (distorted) pixel coordinates.
pub fn project_to_pixel(
    point: &Vector3<f64>,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
) -> Result<Vector2<f64>> {
    let cam = pose.rotation().tr_mul(&(point - pose.center()));
    if cam.z <= DEGENERACY_EPS {
        return Err(Error::IntersectionBehindCamera { lambda: cam.z });
    }
    Ok(intr.distort_to_pixel(Vector2::new(cam.x / cam.z, cam.y / cam.z)))
}

fn signed_solid_angle_triangle(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let numer = a.dot(&b.cross(c));
    let denom = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * numer.atan2(denom)
}

/// Solid angle (steradians) of the spherical triangle spanned by three
/// unit directions, via the planar-triangle formula
/// tan(omega/2) = a.(b x c) / (1 + a.b + b.c + c.a).
pub fn solid_angle_triangle(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    signed_solid_angle_triangle(a, b, c).abs()
}

/// Solid angle of the spherical quad spanned by four unit directions,
/// split into two triangles along the (0, 2) diagonal. The result does
/// not depend on the diagonal choice (within 1e-12 sr) and is positive.
pub fn solid_angle_quad(dirs: &[Vector3<f64>; 4]) -> Result<f64> {
    for i in 0..4 {
        for j in (i + 1)..4 {
            let d = dirs[i].dot(&dirs[j]);
            if d >= 1.0 - DEGENERACY_EPS {
                return Err(Error::DegenerateQuad("duplicate directions"));
            }
            if d <= -1.0 + DEGENERACY_EPS {
                return Err(Error::DegenerateQuad("antipodal directions"));
            }
        }
    }
    let t1 = signed_solid_angle_triangle(&dirs[0], &dirs[1], &dirs[2]);
    let t2 = signed_solid_angle_triangle(&dirs[0], &dirs[2], &dirs[3]);
    Ok((t1 + t2).abs())
}
