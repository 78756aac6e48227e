//! Light source models and the energy-preserving forward renderer.
//!
//! A light is a point emitter with a directional characteristic: either a
//! rotationally symmetric RID curve (relative intensity over the angle
//! theta from the central axis) or a (theta, phi) radiance grid for
//! non-symmetric emitters. The light pose is stored relative to the
//! camera rig — position in camera coordinates, orientation as roll/pitch
//! (plus yaw for grid lights) away from the optical axis — and is resolved
//! into the reference-plane frame per view via [`LightModel::resolve`].
//!
//! Rendering follows energy preservation: the flux through a pixel's
//! back-projected quad equals the flux through the quad's projection onto
//! the light's unit hemisphere, so the incident energy is
//! `s * omega * e_bar` (solid angle times the averaged characteristic),
//! and the camera-observed value applies Lambert's cosine law and an
//! inverse-square falloff over the plane-to-camera distance.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    pixel_quad, rot_x, rot_y, rot_z, solid_angle_quad, CameraIntrinsics, CameraPose, PlaneQuad,
    PLANE_Z_EPS,
};
use crate::raster::ImageBuffer;

/// Rotationally symmetric radiation intensity distribution: piecewise
/// linear in the angle from the central axis, zero beyond the last sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RidCurve {
    /// Sample angles in radians, strictly increasing, starting at 0.
    thetas: Vec<f64>,
    values: Vec<f64>,
}

impl RidCurve {
    /// Builds a curve from `(theta_deg, intensity)` pairs. Angles must
    /// start at 0, increase strictly and stay within [0, 180] degrees;
    /// intensities must be non-negative.
    pub fn from_samples_deg(samples: &[(f64, f64)]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("RID curve needs at least one sample"));
        }
        if samples[0].0 != 0.0 {
            return Err(Error::invalid(format!(
                "first RID sample must be at 0 degrees (got {})",
                samples[0].0
            )));
        }
        let mut thetas = Vec::with_capacity(samples.len());
        let mut values = Vec::with_capacity(samples.len());
        let mut prev = f64::NEG_INFINITY;
        for &(theta_deg, value) in samples {
            if !theta_deg.is_finite() || !value.is_finite() {
                return Err(Error::invalid("RID sample is not finite"));
            }
            if theta_deg <= prev {
                return Err(Error::invalid("RID angles must increase strictly"));
            }
            if theta_deg > 180.0 {
                return Err(Error::invalid("RID angles must stay within [0, 180] degrees"));
            }
            if value < 0.0 {
                return Err(Error::invalid("RID intensities must be non-negative"));
            }
            prev = theta_deg;
            thetas.push(theta_deg.to_radians());
            values.push(value);
        }
        Ok(Self { thetas, values })
    }

    /// Uniform emitter over the whole sphere of directions.
    pub fn isotropic() -> Self {
        Self::from_samples_deg(&[(0.0, 1.0), (180.0, 1.0)]).expect("static samples")
    }

    /// Samples as `(theta_deg, intensity)` pairs, for serialization.
    pub fn samples_deg(&self) -> Vec<(f64, f64)> {
        self.thetas
            .iter()
            .zip(&self.values)
            .map(|(t, v)| (t.to_degrees(), *v))
            .collect()
    }

    /// Piecewise-linear evaluation at `theta` radians. Evaluation past the
    /// last sample returns 0: the light emits nothing outside its cone.
    pub fn eval(&self, theta: f64) -> f64 {
        let last = *self.thetas.last().expect("non-empty");
        if theta > last {
            return 0.0;
        }
        if theta <= 0.0 {
            return self.values[0];
        }
        let idx = self.thetas.partition_point(|t| *t <= theta);
        if idx >= self.thetas.len() {
            return *self.values.last().expect("non-empty");
        }
        let (t0, t1) = (self.thetas[idx - 1], self.thetas[idx]);
        let (v0, v1) = (self.values[idx - 1], self.values[idx]);
        v0 + (v1 - v0) * (theta - t0) / (t1 - t0)
    }
}

/// Radiance lookup grid for non-symmetric lights: rows span the polar
/// angle theta uniformly over [0, 90] degrees, columns span the azimuth
/// phi about the central axis with periodic wrap-around. Bilinear
/// interpolation; zero beyond the last theta row.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceGrid {
    n_theta: usize,
    n_phi: usize,
    values: Vec<f64>,
}

impl RadianceGrid {
    pub fn new(n_theta: usize, n_phi: usize, values: Vec<f64>) -> Result<Self> {
        if n_theta < 2 || n_phi < 4 {
            return Err(Error::invalid(format!(
                "radiance grid must be at least 2 x 4 (got {n_theta} x {n_phi})"
            )));
        }
        if values.len() != n_theta * n_phi {
            return Err(Error::invalid(format!(
                "radiance grid expects {} values, got {}",
                n_theta * n_phi,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::invalid("radiance grid values must be finite and non-negative"));
        }
        Ok(Self { n_theta, n_phi, values })
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.n_theta, self.n_phi)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, theta: f64, phi: f64) -> f64 {
        let theta_max = std::f64::consts::FRAC_PI_2;
        if theta > theta_max {
            return 0.0;
        }
        let t = (theta.max(0.0) / theta_max) * (self.n_theta - 1) as f64;
        let i0 = (t.floor() as usize).min(self.n_theta - 2);
        let ft = t - i0 as f64;

        let mut p = phi.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU
            * self.n_phi as f64;
        if p >= self.n_phi as f64 {
            p -= self.n_phi as f64;
        }
        let j0 = p.floor() as usize % self.n_phi;
        let fp = p - j0 as f64;
        let j1 = (j0 + 1) % self.n_phi;

        let at = |i: usize, j: usize| self.values[i * self.n_phi + j];
        let row0 = at(i0, j0) + (at(i0, j1) - at(i0, j0)) * fp;
        let row1 = at(i0 + 1, j0) + (at(i0 + 1, j1) - at(i0 + 1, j0)) * fp;
        row0 + (row1 - row0) * ft
    }
}

/// Angular characteristic of a light source.
#[derive(Debug, Clone, PartialEq)]
pub enum LightCharacteristic {
    Rid(RidCurve),
    Grid(RadianceGrid),
}

impl LightCharacteristic {
    /// Grid lights carry a third orientation angle (yaw about the central
    /// axis); for symmetric lights that rotation is unobservable.
    pub fn has_yaw(&self) -> bool {
        matches!(self, LightCharacteristic::Grid(_))
    }

    /// Evaluates the characteristic for a unit direction expressed in the
    /// light's local frame (+Z is the central axis).
    pub fn eval_local_dir(&self, dir: &Vector3<f64>) -> f64 {
        let theta = dir.z.clamp(-1.0, 1.0).acos();
        match self {
            LightCharacteristic::Rid(curve) => curve.eval(theta),
            LightCharacteristic::Grid(grid) => grid.eval(theta, dir.y.atan2(dir.x)),
        }
    }
}

/// Orientation of the light's central axis relative to the camera optical
/// axis, in radians. Roll tilts about X, pitch about Y (extrinsic, in that
/// order); yaw spins about the resulting central axis and only matters for
/// grid lights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightOrientation {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl LightOrientation {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn axis(&self) -> Vector3<f64> {
        light_axis(self.roll, self.pitch)
    }

    pub fn frame(&self) -> Matrix3<f64> {
        light_frame(self.roll, self.pitch, self.yaw)
    }
}

/// Central-axis direction for the given roll/pitch: the optical axis
/// rotated by roll about X, then pitch about Y.
pub fn light_axis(roll: f64, pitch: f64) -> Vector3<f64> {
    rot_y(pitch) * (rot_x(roll) * Vector3::z())
}

/// Full light-to-reference frame for roll/pitch/yaw. The third column is
/// the central axis; yaw spins the frame about it, which leaves the axis
/// (and any symmetric characteristic) untouched.
pub fn light_frame(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    rot_y(pitch) * rot_x(roll) * rot_z(yaw)
}

/// A light source rigidly attached to the camera: pose in the camera
/// frame, angular characteristic and a dimensionless scale absorbing all
/// linear factors (sensor conversion, exposure, plane albedo).
#[derive(Debug, Clone, PartialEq)]
pub struct LightModel {
    pub position: Vector3<f64>,
    pub orientation: LightOrientation,
    pub characteristic: LightCharacteristic,
    pub scale: f64,
}

impl LightModel {
    pub fn new(
        position: Vector3<f64>,
        orientation: LightOrientation,
        characteristic: LightCharacteristic,
        scale: f64,
    ) -> Result<Self> {
        if !position.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("light position must be finite"));
        }
        if ![orientation.roll, orientation.pitch, orientation.yaw]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::invalid("light orientation must be finite"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!("light scale must be positive (got {scale})")));
        }
        Ok(Self { position, orientation, characteristic, scale })
    }

    /// Expresses the rig-mounted light in the reference-plane frame of one
    /// view.
    pub fn resolve<'a>(&'a self, pose: &CameraPose) -> WorldLight<'a> {
        WorldLight {
            position: pose.rotation() * self.position + pose.center(),
            frame: pose.rotation() * self.orientation.frame(),
            characteristic: &self.characteristic,
            scale: self.scale,
        }
    }
}

/// A light resolved into the reference-plane frame: world position plus a
/// light-to-world rotation whose third column is the central axis.
#[derive(Debug, Clone)]
pub struct WorldLight<'a> {
    pub position: Vector3<f64>,
    pub frame: Matrix3<f64>,
    pub characteristic: &'a LightCharacteristic,
    pub scale: f64,
}

impl<'a> WorldLight<'a> {
    pub fn new(
        position: Vector3<f64>,
        frame: Matrix3<f64>,
        characteristic: &'a LightCharacteristic,
        scale: f64,
    ) -> Self {
        Self { position, frame, characteristic, scale }
    }

    pub fn axis(&self) -> Vector3<f64> {
        self.frame.column(2).into()
    }

    fn eval_world_dir(&self, dir: &Vector3<f64>) -> f64 {
        let local = self.frame.tr_mul(dir);
        self.characteristic.eval_local_dir(&local)
    }
}

/// Relative energy a plane quad receives from the light: the quad corners
/// are projected onto unit directions from the light, the solid angle of
/// that spherical quad is scaled by the characteristic averaged over five
/// directions (four corners plus centroid) and by the light's scale.
pub fn incident_irradiance(quad: &PlaneQuad, light: &WorldLight) -> Result<f64> {
    if light.position.z <= PLANE_Z_EPS {
        return Err(Error::LightOnPlane { z: light.position.z });
    }
    let mut dirs = [Vector3::zeros(); 4];
    let mut e_sum = 0.0;
    for (dir, corner) in dirs.iter_mut().zip(quad.corners()) {
        let v = corner - light.position;
        let norm = v.norm();
        if norm < 1e-9 {
            return Err(Error::ZeroDistance("light and quad corner"));
        }
        *dir = v / norm;
        e_sum += light.eval_world_dir(dir);
    }
    let omega = solid_angle_quad(&dirs)?;
    let to_centroid = quad.centroid() - light.position;
    let centroid_norm = to_centroid.norm();
    if centroid_norm < 1e-9 {
        return Err(Error::ZeroDistance("light and quad centroid"));
    }
    e_sum += light.eval_world_dir(&(to_centroid / centroid_norm));
    Ok(light.scale * omega * (e_sum / 5.0))
}

/// Lambertian reflection towards the camera: scales the incident energy by
/// the clamped cosine of the incidence angle and by the inverse square of
/// the plane-point-to-camera distance.
pub fn reflect_to_camera(
    incident: f64,
    point: &Vector3<f64>,
    light: &WorldLight,
    camera_center: &Vector3<f64>,
) -> Result<f64> {
    let to_point = point - light.position;
    let light_dist = to_point.norm();
    if light_dist < 1e-9 {
        return Err(Error::ZeroDistance("light and surface point"));
    }
    let incidence = to_point / light_dist;
    // Surface normal is +Z; back-facing incidence reflects nothing.
    let cos_in = (-incidence.z).max(0.0);
    let d = (point - camera_center).norm();
    if d < 1e-9 {
        return Err(Error::ZeroDistance("surface point and camera"));
    }
    Ok(incident * cos_in / (d * d))
}

/// Full per-quad forward model: incident energy, then reflection towards
/// the camera evaluated at the quad centroid.
pub fn render_quad(
    quad: &PlaneQuad,
    light: &WorldLight,
    camera_center: &Vector3<f64>,
) -> Result<f64> {
    let incident = incident_irradiance(quad, light)?;
    reflect_to_camera(incident, quad.centroid(), light, camera_center)
}

/// Renders the linear intensity of one pixel.
pub fn render_pixel(
    px: (u32, u32),
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    light: &LightModel,
) -> Result<f64> {
    let quad = pixel_quad(px, intr, pose)?;
    let world = light.resolve(pose);
    render_quad(&quad, &world, pose.center())
}

/// A rendered linear-intensity image plus a per-pixel validity mask.
/// Pixels whose quads fail to back-project are masked out, not zeroed
/// silently.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub image: ImageBuffer,
    pub mask: Vec<bool>,
}

impl RenderedImage {
    pub fn valid_fraction(&self) -> f64 {
        if self.mask.is_empty() {
            return 0.0;
        }
        self.mask.iter().filter(|m| **m).count() as f64 / self.mask.len() as f64
    }

    pub fn max_intensity(&self) -> f64 {
        self.image
            .data
            .iter()
            .zip(&self.mask)
            .filter(|(_, m)| **m)
            .map(|(v, _)| *v)
            .fold(0.0, f64::max)
    }
}

/// Renders every pixel of a view. Rows are evaluated in parallel; each
/// pixel is independent, so the result does not depend on the schedule.
pub fn render_image(
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    light: &LightModel,
) -> RenderedImage {
    let world = light.resolve(pose);
    let width = intr.width as usize;
    let height = intr.height as usize;
    let mut data = vec![0.0f64; width * height];
    let mut mask = vec![false; width * height];
    data.par_chunks_mut(width)
        .zip(mask.par_chunks_mut(width))
        .enumerate()
        .for_each(|(v, (drow, mrow))| {
            for u in 0..width {
                let result = pixel_quad((u as u32, v as u32), intr, pose)
                    .and_then(|quad| render_quad(&quad, &world, pose.center()));
                if let Ok(value) = result {
                    drow[u] = value;
                    mrow[u] = true;
                }
            }
        });
    RenderedImage {
        image: ImageBuffer { width: intr.width, height: intr.height, data },
        mask,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Distortion;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;
    use std::f64::consts::FRAC_PI_2;

    fn down_frame() -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0))
    }

    fn plane_square(cx: f64, cy: f64, half: f64) -> PlaneQuad {
        PlaneQuad::new([
            Vector3::new(cx - half, cy - half, 0.0),
            Vector3::new(cx + half, cy - half, 0.0),
            Vector3::new(cx + half, cy + half, 0.0),
            Vector3::new(cx - half, cy + half, 0.0),
        ])
        .unwrap()
    }

    #[test]
    fn rid_eval_interpolates_and_cuts_off() {
        let curve = RidCurve::from_samples_deg(&[(0.0, 1.0), (10.0, 0.5), (20.0, 0.0)]).unwrap();
        assert_eq!(curve.eval(0.0), 1.0);
        assert_relative_eq!(curve.eval(5f64.to_radians()), 0.75, epsilon = 1e-12);
        assert_relative_eq!(curve.eval(20f64.to_radians()), 0.0, epsilon = 1e-15);
        assert_eq!(curve.eval(21f64.to_radians()), 0.0);
        assert_eq!(curve.eval(3.0), 0.0);
    }

    #[test]
    fn rid_rejects_malformed_samples() {
        assert!(RidCurve::from_samples_deg(&[]).is_err());
        assert!(RidCurve::from_samples_deg(&[(1.0, 1.0)]).is_err());
        assert!(RidCurve::from_samples_deg(&[(0.0, 1.0), (0.0, 0.5)]).is_err());
        assert!(RidCurve::from_samples_deg(&[(0.0, 1.0), (10.0, -0.1)]).is_err());
        assert!(RidCurve::from_samples_deg(&[(0.0, 1.0), (190.0, 0.5)]).is_err());
    }

    #[test]
    fn grid_constant_in_phi_matches_rid_profile() {
        let n_theta = 10;
        let n_phi = 8;
        let profile: Vec<f64> = (0..n_theta)
            .map(|i| 1.0 - i as f64 / (n_theta - 1) as f64 * 0.8)
            .collect();
        let mut values = Vec::new();
        for v in &profile {
            values.extend(std::iter::repeat(*v).take(n_phi));
        }
        let grid = RadianceGrid::new(n_theta, n_phi, values).unwrap();
        let samples: Vec<(f64, f64)> = profile
            .iter()
            .enumerate()
            .map(|(i, v)| (90.0 * i as f64 / (n_theta - 1) as f64, *v))
            .collect();
        let curve = RidCurve::from_samples_deg(&samples).unwrap();
        for i in 0..200 {
            let theta = FRAC_PI_2 * i as f64 / 199.0;
            for phi in [0.0, 0.7, 2.1, 5.9] {
                assert_relative_eq!(grid.eval(theta, phi), curve.eval(theta), epsilon = 1e-12);
            }
        }
        assert_eq!(grid.eval(FRAC_PI_2 + 1e-6, 0.3), 0.0);
    }

    #[test]
    fn light_axis_identity_and_perpendicular() {
        assert_relative_eq!((light_axis(0.0, 0.0) - Vector3::z()).norm(), 0.0, epsilon = 1e-15);
        let tilted = light_axis(0.0, FRAC_PI_2);
        assert!(tilted.dot(&Vector3::z()).abs() < 1e-12);
        assert!((tilted.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn light_axis_matches_rotation_composition() {
        // Independent route: multiply the two elementary rotation matrices
        // written out by hand and apply them to the optical axis.
        let (roll, pitch) = (0.1f64, 0.2f64);
        let rx = Matrix3::new(
            1.0, 0.0, 0.0,
            0.0, roll.cos(), -roll.sin(),
            0.0, roll.sin(), roll.cos(),
        );
        let ry = Matrix3::new(
            pitch.cos(), 0.0, pitch.sin(),
            0.0, 1.0, 0.0,
            -pitch.sin(), 0.0, pitch.cos(),
        );
        let expected = ry * rx * Vector3::z();
        assert_relative_eq!((light_axis(roll, pitch) - expected).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn isotropic_incidence_equals_solid_angle() {
        let characteristic = LightCharacteristic::Rid(RidCurve::isotropic());
        let light = WorldLight::new(Vector3::new(0.0, 0.0, 1.0), down_frame(), &characteristic, 1.0);
        let quad = plane_square(0.3, -0.2, 0.01);
        let incident = incident_irradiance(&quad, &light).unwrap();
        let mut dirs = [Vector3::zeros(); 4];
        for (d, c) in dirs.iter_mut().zip(quad.corners()) {
            *d = (c - light.position).normalize();
        }
        let omega = solid_angle_quad(&dirs).unwrap();
        assert_eq!(incident, omega * 1.0);
    }

    #[test]
    fn quad_outside_cone_receives_nothing() {
        let narrow = LightCharacteristic::Rid(
            RidCurve::from_samples_deg(&[(0.0, 1.0), (5.0, 0.0)]).unwrap(),
        );
        let light = WorldLight::new(Vector3::new(0.0, 0.0, 1.0), down_frame(), &narrow, 2.0);
        // Quad far off-axis: every one of the five directions is beyond 5 deg.
        let quad = plane_square(3.0, 0.0, 0.01);
        assert_eq!(incident_irradiance(&quad, &light).unwrap(), 0.0);
    }

    #[test]
    fn straddling_quad_uses_five_point_average() {
        let curve = RidCurve::from_samples_deg(&[(0.0, 1.0), (45.0, 1.0), (45.1, 0.0)]).unwrap();
        let characteristic = LightCharacteristic::Rid(curve.clone());
        let light = WorldLight::new(Vector3::new(0.0, 0.0, 1.0), down_frame(), &characteristic, 3.0);
        // Centered at 45 deg off-axis: the cone edge cuts through the quad.
        let quad = plane_square(1.0, 0.0, 0.05);
        let incident = incident_irradiance(&quad, &light).unwrap();
        let mut dirs = [Vector3::zeros(); 4];
        let mut e_sum = 0.0;
        for (d, c) in dirs.iter_mut().zip(quad.corners()) {
            *d = (c - light.position).normalize();
            // The light points straight down, so theta is the angle to -Z.
            e_sum += curve.eval((-d.z).clamp(-1.0, 1.0).acos());
        }
        let centroid_dir = (quad.centroid() - light.position).normalize();
        e_sum += curve.eval((-centroid_dir.z).clamp(-1.0, 1.0).acos());
        let omega = solid_angle_quad(&dirs).unwrap();
        let expected = 3.0 * omega * e_sum / 5.0;
        assert_relative_eq!(incident, expected, max_relative = 1e-12);
        assert!(incident > 0.0 && incident < 3.0 * omega);
    }

    #[test]
    fn light_on_plane_is_rejected() {
        let characteristic = LightCharacteristic::Rid(RidCurve::isotropic());
        let light = WorldLight::new(Vector3::new(0.0, 0.0, 0.0), down_frame(), &characteristic, 1.0);
        let quad = plane_square(0.5, 0.0, 0.01);
        assert!(matches!(
            incident_irradiance(&quad, &light),
            Err(Error::LightOnPlane { .. })
        ));
    }

    #[test]
    fn reflection_normal_incidence_and_inverse_square() {
        let characteristic = LightCharacteristic::Rid(RidCurve::isotropic());
        let light = WorldLight::new(Vector3::new(0.0, 0.0, 2.0), down_frame(), &characteristic, 1.0);
        let p = Vector3::new(0.0, 0.0, 0.0);
        let near = reflect_to_camera(0.5, &p, &light, &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(near, 0.5);
        let far = reflect_to_camera(0.5, &p, &light, &Vector3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(far, 0.5 / 4.0);
    }

    #[test]
    fn grazing_incidence_reflects_nothing() {
        let characteristic = LightCharacteristic::Rid(RidCurve::isotropic());
        let light = WorldLight::new(Vector3::new(0.0, 0.0, 1.0), down_frame(), &characteristic, 1.0);
        // Incident ray exactly perpendicular to the surface normal.
        let grazing = Vector3::new(2.0, 0.0, 1.0);
        let value = reflect_to_camera(1.0, &grazing, &light, &Vector3::new(0.0, 0.0, 3.0)).unwrap();
        assert_eq!(value, 0.0);
        // Back-facing incidence clamps to zero instead of going negative.
        let behind = Vector3::new(0.5, 0.0, 2.0);
        let value = reflect_to_camera(1.0, &behind, &light, &Vector3::new(0.0, 0.0, 3.0)).unwrap();
        assert_eq!(value, 0.0);
    }

    #[test]
    fn render_pixel_is_linear_in_scale() {
        let intr = CameraIntrinsics::new(
            300.0, 300.0, 160.0, 120.0, 320, 240,
            Distortion::new(-0.05, 0.01, 1e-4, -2e-4, 0.0),
        )
        .unwrap();
        let pose = CameraPose::look_at(
            Vector3::new(0.2, -0.3, 1.9),
            Vector3::new(0.0, 0.0, 0.0),
            0.2,
        )
        .unwrap();
        let characteristic = LightCharacteristic::Rid(
            RidCurve::from_samples_deg(&[(0.0, 1.0), (60.0, 0.4), (90.0, 0.0)]).unwrap(),
        );
        let base = LightModel::new(
            Vector3::new(0.2, -0.1, 0.05),
            LightOrientation::new(0.05, -0.1, 0.0),
            characteristic.clone(),
            1.0e5,
        )
        .unwrap();
        let mut doubled = base.clone();
        doubled.scale = 2.0e5;
        let v1 = render_pixel((170, 130), &intr, &pose, &base).unwrap();
        let v2 = render_pixel((170, 130), &intr, &pose, &doubled).unwrap();
        assert!(v1 > 0.0);
        assert_eq!(v2, 2.0 * v1);
    }

    #[test]
    fn render_rejects_light_below_plane() {
        let intr = CameraIntrinsics::new(
            300.0, 300.0, 160.0, 120.0, 320, 240, Distortion::default(),
        )
        .unwrap();
        let pose = CameraPose::new(down_frame(), Vector3::new(0.0, 0.0, 1.5)).unwrap();
        let characteristic = LightCharacteristic::Rid(RidCurve::isotropic());
        // Rig offset pushing the light through the plane once resolved.
        let light = LightModel::new(
            Vector3::new(0.0, 0.0, 2.0),
            LightOrientation::new(0.0, 0.0, 0.0),
            characteristic,
            1.0,
        )
        .unwrap();
        let result = render_pixel((160, 120), &intr, &pose, &light);
        assert!(matches!(result, Err(Error::LightOnPlane { .. })));
    }

    #[test]
    fn co_located_isotropic_light_matches_small_quad_limit() {
        // Fronto-parallel camera at height h with the light at the camera
        // center: the center pixel sees s * (A / h^2) / h^2 with
        // A = (h/fx)(h/fy), up to the small-quad approximation.
        let (fx, h, s) = (1500.0, 2.0, 3.0);
        let intr = CameraIntrinsics::new(
            fx, fx, 160.0, 120.0, 320, 240, Distortion::default(),
        )
        .unwrap();
        let pose = CameraPose::new(down_frame(), Vector3::new(0.0, 0.0, h)).unwrap();
        let characteristic = LightCharacteristic::Rid(RidCurve::isotropic());
        let light = LightModel::new(
            Vector3::zeros(),
            LightOrientation::new(0.0, 0.0, 0.0),
            characteristic,
            s,
        )
        .unwrap();
        // Pixel (160, 120) owns [160, 161] x [120, 121]; its quad sits just
        // off-axis, which the small-quad limit absorbs.
        let value = render_pixel((160, 120), &intr, &pose, &light).unwrap();
        let area = (h / fx) * (h / fx);
        let expected = s * (area / (h * h)) / (h * h);
        assert_relative_eq!(value, expected, max_relative = 1e-3);
    }

    #[test]
    fn zero_rid_renders_all_zero() {
        let intr = CameraIntrinsics::new(
            120.0, 120.0, 32.0, 24.0, 64, 48, Distortion::default(),
        )
        .unwrap();
        let pose = CameraPose::new(down_frame(), Vector3::new(0.0, 0.0, 1.5)).unwrap();
        let characteristic = LightCharacteristic::Rid(
            RidCurve::from_samples_deg(&[(0.0, 0.0), (90.0, 0.0)]).unwrap(),
        );
        let light = LightModel::new(
            Vector3::new(0.1, 0.0, 0.0),
            LightOrientation::new(0.0, 0.0, 0.0),
            characteristic,
            1.0,
        )
        .unwrap();
        let rendered = render_image(&intr, &pose, &light);
        assert!(rendered.mask.iter().all(|m| *m));
        assert!(rendered.image.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn symmetric_light_render_ignores_yaw_bitwise() {
        let intr = CameraIntrinsics::new(
            200.0, 200.0, 40.0, 30.0, 80, 60,
            Distortion::new(-0.03, 0.0, 0.0, 0.0, 0.0),
        )
        .unwrap();
        let pose = CameraPose::look_at(
            Vector3::new(0.3, 0.2, 1.6),
            Vector3::new(0.0, 0.0, 0.0),
            -0.4,
        )
        .unwrap();
        let characteristic = LightCharacteristic::Rid(
            RidCurve::from_samples_deg(&[(0.0, 1.0), (40.0, 0.5), (80.0, 0.0)]).unwrap(),
        );
        let spin = |yaw: f64| {
            let light = LightModel::new(
                Vector3::new(0.15, -0.08, 0.02),
                LightOrientation::new(0.07, -0.12, yaw),
                characteristic.clone(),
                2.0e4,
            )
            .unwrap();
            render_image(&intr, &pose, &light)
        };
        let a = spin(0.0);
        let b = spin(1.234567);
        assert_eq!(a.image.data, b.image.data);
        assert_eq!(a.mask, b.mask);
    }

    #[test]
    fn grid_constant_in_phi_renders_like_rid() {
        let intr = CameraIntrinsics::new(
            200.0, 200.0, 40.0, 30.0, 80, 60, Distortion::default(),
        )
        .unwrap();
        let pose = CameraPose::look_at(
            Vector3::new(-0.2, 0.1, 1.4),
            Vector3::new(0.05, 0.0, 0.0),
            0.1,
        )
        .unwrap();
        let n_theta = 16;
        let n_phi = 12;
        let profile: Vec<f64> = (0..n_theta)
            .map(|i| (1.0 - i as f64 / (n_theta - 1) as f64).powi(2))
            .collect();
        let mut values = Vec::new();
        for v in &profile {
            values.extend(std::iter::repeat(*v).take(n_phi));
        }
        let samples: Vec<(f64, f64)> = profile
            .iter()
            .enumerate()
            .map(|(i, v)| (90.0 * i as f64 / (n_theta - 1) as f64, *v))
            .collect();
        let grid_light = LightModel::new(
            Vector3::new(0.1, 0.05, 0.03),
            LightOrientation::new(0.05, 0.08, 0.9),
            LightCharacteristic::Grid(RadianceGrid::new(n_theta, n_phi, values).unwrap()),
            5.0e4,
        )
        .unwrap();
        let rid_light = LightModel::new(
            grid_light.position,
            grid_light.orientation,
            LightCharacteristic::Rid(RidCurve::from_samples_deg(&samples).unwrap()),
            5.0e4,
        )
        .unwrap();
        let a = render_image(&intr, &pose, &grid_light);
        let b = render_image(&intr, &pose, &rid_light);
        assert_eq!(a.mask, b.mask);
        let max_val = b.max_intensity();
        assert!(max_val > 0.0);
        for (x, y) in a.image.data.iter().zip(&b.image.data) {
            assert!((x - y).abs() <= 1e-9 * max_val.max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn render_image_flags_unprojectable_pixels() {
        // A sideways camera: rays above the horizon never meet the plane.
        let intr = CameraIntrinsics::new(
            40.0, 40.0, 32.0, 24.0, 64, 48, Distortion::default(),
        )
        .unwrap();
        let target = Vector3::new(4.0, 0.0, 0.0);
        let pose = CameraPose::look_at(Vector3::new(0.0, 0.0, 1.0), target, 0.0).unwrap();
        let characteristic = LightCharacteristic::Rid(RidCurve::isotropic());
        let light = LightModel::new(
            Vector3::zeros(),
            LightOrientation::new(0.0, 0.0, 0.0),
            characteristic,
            1.0,
        )
        .unwrap();
        let rendered = render_image(&intr, &pose, &light);
        let invalid = rendered.mask.iter().filter(|m| !**m).count();
        assert!(invalid > 0, "expected masked pixels above the horizon");
        assert!(rendered.valid_fraction() > 0.0);
    }
}
