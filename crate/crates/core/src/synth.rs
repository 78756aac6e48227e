//! Synthetic multi-view dataset generation.
//!
//! Renders a known rig-mounted light over seeded random camera poses and
//! writes a dataset in the same format the calibration commands consume,
//! plus a ground-truth sidecar. The sidecar is a separate file so nothing
//! in the calibration path can read it by accident. Re-running with the
//! same spec reproduces every output byte.

use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, Unit, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    save_grid_csv, save_manifest, save_rid_csv, CharacteristicKind, CharacteristicRef,
    DatasetManifest, LightFile, ViewEntry, MANIFEST_VERSION,
};
use crate::error::{Error, Result};
use crate::geometry::{back_project_corner, CameraIntrinsics, CameraPose, Distortion, PLANE_Z_EPS};
use crate::photometry::{
    render_image, LightCharacteristic, LightModel, RadianceGrid, RenderedImage, RidCurve,
};
use crate::raster::write_pfm;

/// Inline light characteristic of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CharacteristicSpec {
    Rid { samples_deg: Vec<[f64; 2]> },
    Grid { n_theta: usize, n_phi: usize, values: Vec<f64> },
}

impl CharacteristicSpec {
    pub fn build(&self) -> Result<LightCharacteristic> {
        match self {
            CharacteristicSpec::Rid { samples_deg } => {
                let samples: Vec<(f64, f64)> = samples_deg.iter().map(|s| (s[0], s[1])).collect();
                Ok(LightCharacteristic::Rid(RidCurve::from_samples_deg(&samples)?))
            }
            CharacteristicSpec::Grid { n_theta, n_phi, values } => Ok(LightCharacteristic::Grid(
                RadianceGrid::new(*n_theta, *n_phi, values.clone())?,
            )),
        }
    }

    pub fn kind(&self) -> CharacteristicKind {
        match self {
            CharacteristicSpec::Rid { .. } => CharacteristicKind::Rid,
            CharacteristicSpec::Grid { .. } => CharacteristicKind::Grid,
        }
    }
}

/// Smooth wide reflector profile, cos(theta)^1.5 sampled every 2 degrees
/// down to zero at 90.
pub fn default_rid_samples() -> Vec<[f64; 2]> {
    (0..=45)
        .map(|i| {
            let deg = 2.0 * i as f64;
            [deg, deg.to_radians().cos().max(0.0).powf(1.5)]
        })
        .collect()
}

/// Complete description of a synthetic scene: camera, ground-truth light,
/// pose randomization ranges, noise model and seed. Every field has a
/// default, so `{}` is a valid scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub n_views: usize,
    /// Camera-to-target distance range, meters.
    pub distance_range: [f64; 2],
    /// Tilt away from fronto-parallel, degrees, about a random axis.
    pub tilt_range_deg: [f64; 2],
    pub intrinsics: CameraIntrinsics,
    /// Ground-truth light pose in the camera frame (angles in degrees).
    pub light: LightFile,
    pub characteristic: CharacteristicSpec,
    /// Additive gaussian noise, as a fraction of the maximum rendered
    /// intensity across the dataset.
    pub noise_sigma: f64,
    /// Optional uniform quantization of [0, max] to 2^bits levels.
    pub quant_bits: Option<u32>,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_views: 12,
            distance_range: [1.4, 2.6],
            tilt_range_deg: [0.0, 30.0],
            intrinsics: CameraIntrinsics {
                fx: 300.0,
                fy: 300.0,
                cx: 160.0,
                cy: 120.0,
                width: 320,
                height: 240,
                dist: Distortion::new(-0.08, 0.01, 5e-4, -4e-4, 0.0),
            },
            light: LightFile {
                position: [0.22, -0.10, 0.04],
                roll_deg: 4.0,
                pitch_deg: -7.0,
                yaw_deg: None,
                scale: 1.6e5,
            },
            characteristic: CharacteristicSpec::Rid { samples_deg: default_rid_samples() },
            noise_sigma: 0.0,
            quant_bits: None,
            seed: 7,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_views < 2 {
            return Err(Error::invalid("a dataset needs at least 2 views"));
        }
        self.validate_ranges()?;
        self.intrinsics.validate()?;
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma must be non-negative"));
        }
        if let Some(bits) = self.quant_bits {
            if !(1..=16).contains(&bits) {
                return Err(Error::invalid("quant_bits must lie in 1..=16"));
            }
        }
        // Both must build.
        self.light.to_model(self.characteristic.build()?)?;
        Ok(())
    }

    fn validate_ranges(&self) -> Result<()> {
        let [d0, d1] = self.distance_range;
        if !(d0.is_finite() && d1.is_finite() && 0.0 < d0 && d0 <= d1) {
            return Err(Error::invalid("distance_range must be positive and ordered"));
        }
        let [t0, t1] = self.tilt_range_deg;
        if !(t0.is_finite() && t1.is_finite() && 0.0 <= t0 && t0 <= t1 && t1 < 80.0) {
            return Err(Error::invalid("tilt_range_deg must lie in [0, 80) and be ordered"));
        }
        Ok(())
    }

    pub fn ground_truth_light(&self) -> Result<LightModel> {
        self.light.to_model(self.characteristic.build()?)
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn draw_pose(rng: &mut ChaCha8Rng, spec: &ScenarioSpec) -> Result<CameraPose> {
    let distance = uniform(rng, spec.distance_range[0], spec.distance_range[1]);
    let tilt = uniform(rng, spec.tilt_range_deg[0], spec.tilt_range_deg[1]).to_radians();
    let tilt_axis_az = rng.random_range(0.0..std::f64::consts::TAU);
    let target_radius = rng.random_range(0.0..0.15) * distance;
    let target_az = rng.random_range(0.0..std::f64::consts::TAU);
    let roll = rng.random_range(0.0..std::f64::consts::TAU);

    let target = Vector3::new(
        target_radius * target_az.cos(),
        target_radius * target_az.sin(),
        0.0,
    );
    let axis = Unit::new_normalize(Vector3::new(tilt_axis_az.cos(), tilt_axis_az.sin(), 0.0));
    let direction = Rotation3::from_axis_angle(&axis, tilt) * Vector3::z();
    CameraPose::look_at(target + distance * direction, target, roll)
}

fn pose_sees_plane(pose: &CameraPose, intr: &CameraIntrinsics) -> bool {
    let (w, h) = (intr.width as f64, intr.height as f64);
    [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)]
        .iter()
        .all(|&(x, y)| back_project_corner(Vector2::new(x, y), intr, pose).is_ok())
}

/// Seeded-deterministic camera poses: distances and tilts uniform in their
/// ranges, tilt axes and rolls uniform in azimuth, all looking at points
/// near the plane origin, each validated to keep the full frame on the
/// plane.
pub fn sample_poses(spec: &ScenarioSpec) -> Result<Vec<CameraPose>> {
    spec.validate_ranges()?;
    spec.intrinsics.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    let mut poses = Vec::with_capacity(spec.n_views);
    for view in 0..spec.n_views {
        let mut accepted = None;
        for _ in 0..100 {
            let pose = draw_pose(&mut rng, spec)?;
            if pose_sees_plane(&pose, &spec.intrinsics) {
                accepted = Some(pose);
                break;
            }
        }
        poses.push(accepted.ok_or_else(|| {
            Error::invalid(format!(
                "view {view}: no pose with the plane fully in frame after 100 draws; \
                 the tilt range is too steep for this field of view"
            ))
        })?);
    }
    Ok(poses)
}

/// Ground-truth sidecar: the light that generated the dataset plus the
/// full scenario for reproduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub light: LightFile,
    pub scenario: ScenarioSpec,
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path.display(), e.to_string()))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Error::file(path.display(), e.to_string()))
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub manifest_path: PathBuf,
    pub ground_truth_path: PathBuf,
    pub characteristic_path: PathBuf,
    pub image_paths: Vec<PathBuf>,
    /// Maximum clean rendered intensity across the dataset (the reference
    /// for noise sigma and quantization).
    pub max_intensity: f64,
}

fn quantize(value: f64, max: f64, bits: u32) -> f64 {
    let levels = ((1u64 << bits) - 1) as f64;
    (value.clamp(0.0, max) / max * levels).round() / levels * max
}

/// Renders, degrades and writes a dataset. Per-view noise uses its own
/// seeded stream, so generation parallelizes without affecting the bytes.
pub fn generate_dataset(spec: &ScenarioSpec, out_dir: &Path) -> Result<GeneratedDataset> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let light = spec.ground_truth_light()?;
    let poses = sample_poses(spec)?;
    for (index, pose) in poses.iter().enumerate() {
        let z = light.resolve(pose).position.z;
        if z <= PLANE_Z_EPS {
            return Err(Error::invalid(format!(
                "ground-truth light is on or below the plane in view {index} (z = {z:.4})"
            )));
        }
    }

    let rendered: Vec<RenderedImage> = poses
        .par_iter()
        .map(|pose| render_image(&spec.intrinsics, pose, &light))
        .collect();
    let max_intensity = rendered.iter().map(RenderedImage::max_intensity).fold(0.0, f64::max);

    let sigma = spec.noise_sigma * max_intensity;
    let images: Vec<_> = rendered
        .into_par_iter()
        .enumerate()
        .map(|(view, mut r)| {
            if sigma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(1 + view as u64);
                for v in &mut r.image.data {
                    let z: f64 = rng.sample(StandardNormal);
                    *v += sigma * z;
                }
            }
            if let Some(bits) = spec.quant_bits {
                if max_intensity > 0.0 {
                    for v in &mut r.image.data {
                        *v = quantize(*v, max_intensity, bits);
                    }
                }
            }
            r.image
        })
        .collect();

    let characteristic_path = out_dir.join("characteristic.csv");
    match spec.characteristic.build()? {
        LightCharacteristic::Rid(curve) => save_rid_csv(&curve, &characteristic_path)?,
        LightCharacteristic::Grid(grid) => save_grid_csv(&grid, &characteristic_path)?,
    }

    let mut image_paths = Vec::with_capacity(images.len());
    let mut entries = Vec::with_capacity(images.len());
    for (view, image) in images.iter().enumerate() {
        let name = format!("view_{view:03}.pfm");
        let path = out_dir.join(&name);
        write_pfm(image, &path)?;
        entries.push(ViewEntry::from_pose(name, &poses[view]));
        image_paths.push(path);
    }

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        intrinsics: spec.intrinsics.clone(),
        characteristic: CharacteristicRef {
            kind: spec.characteristic.kind(),
            path: "characteristic.csv".to_string(),
        },
        views: entries,
    };
    let manifest_path = out_dir.join("manifest.json");
    save_manifest(&manifest, &manifest_path)?;

    let ground_truth = GroundTruth { light: spec.light.clone(), scenario: spec.clone() };
    let ground_truth_path = out_dir.join("ground_truth.json");
    let file = std::fs::File::create(&ground_truth_path)
        .map_err(|e| Error::file(ground_truth_path.display(), e.to_string()))?;
    let mut writer = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, &ground_truth)?;
    std::io::Write::write_all(&mut writer, b"\n")?;
    std::io::Write::flush(&mut writer)?;

    Ok(GeneratedDataset {
        manifest_path,
        ground_truth_path,
        characteristic_path,
        image_paths,
        max_intensity,
    })
}
