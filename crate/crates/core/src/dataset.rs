//! On-disk dataset formats and loading.
//!
//! A dataset is a JSON manifest next to its image files and one light
//! characteristic file. Angles live in the files as degrees and are
//! converted to radians at this boundary; positions are meters. The
//! manifest schema:
//!
//! ```json
//! {
//!   "version": 1,
//!   "intrinsics": { "fx": .., "fy": .., "cx": .., "cy": ..,
//!                    "width": .., "height": ..,
//!                    "dist": { "k1": .., "k2": .., "p1": .., "p2": .., "k3": .. } },
//!   "characteristic": { "kind": "rid" | "grid", "path": "characteristic.csv" },
//!   "views": [ { "image": "view_000.pfm",
//!                "rotation": [ 9 numbers, row-major camera-to-world ],
//!                "center": [ x, y, z ],
//!                "exposure": 1.0 } ]
//! }
//! ```
//!
//! Images are grayscale PFM (preferred, lossless linear) or 16-bit PGM;
//! PGM samples are divided by their maxval on load. The per-view exposure
//! factor multiplies loaded intensities, equalizing views taken with
//! different exposure times.
//!
//! RID curve files are CSV with header `theta_deg,intensity`, angles
//! ascending. Radiance grid files start with the header `n_theta,n_phi`
//! and its value row, followed by `n_theta` rows of `n_phi` values each
//! (theta rows span [0, 90] degrees uniformly; phi columns wrap around).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CameraPose};
use crate::photometry::{LightCharacteristic, LightModel, LightOrientation, RadianceGrid, RidCurve};
use crate::raster::{read_pfm, read_pgm16, ImageBuffer};
use crate::solver::ConvergenceStatus;

pub const MANIFEST_VERSION: u32 = 1;
pub const REPORT_VERSION: u32 = 1;

/// One loaded view: extrinsics plus the exposure-corrected linear image.
#[derive(Debug, Clone)]
pub struct ViewRecord {
    pub pose: CameraPose,
    pub image: ImageBuffer,
    pub exposure: f64,
}

/// A fully loaded dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub intrinsics: CameraIntrinsics,
    pub characteristic: LightCharacteristic,
    pub views: Vec<ViewRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CharacteristicKind {
    Rid,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacteristicRef {
    pub kind: CharacteristicKind,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub image: String,
    /// Camera-to-world rotation, row-major.
    pub rotation: [f64; 9],
    pub center: [f64; 3],
    #[serde(default = "default_exposure")]
    pub exposure: f64,
}

fn default_exposure() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub intrinsics: CameraIntrinsics,
    pub characteristic: CharacteristicRef,
    pub views: Vec<ViewEntry>,
}

impl ViewEntry {
    pub fn pose(&self) -> Result<CameraPose> {
        CameraPose::new(
            Matrix3::from_row_slice(&self.rotation),
            Vector3::new(self.center[0], self.center[1], self.center[2]),
        )
    }

    pub fn from_pose(image: String, pose: &CameraPose) -> Self {
        let r = pose.rotation();
        Self {
            image,
            rotation: [
                r[(0, 0)], r[(0, 1)], r[(0, 2)],
                r[(1, 0)], r[(1, 1)], r[(1, 2)],
                r[(2, 0)], r[(2, 1)], r[(2, 2)],
            ],
            center: [pose.center().x, pose.center().y, pose.center().z],
            exposure: 1.0,
        }
    }
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    write_json(manifest, path)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let manifest: DatasetManifest = read_json(path)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::file(
            path.display(),
            format!("unsupported manifest version {}", manifest.version),
        ));
    }
    manifest
        .intrinsics
        .validate()
        .map_err(|e| Error::file(path.display(), e.to_string()))?;
    Ok(manifest)
}

/// Loads the characteristic referenced by a manifest, resolving its path
/// relative to `base_dir`.
pub fn load_characteristic(base_dir: &Path, cref: &CharacteristicRef) -> Result<LightCharacteristic> {
    let path = base_dir.join(&cref.path);
    match cref.kind {
        CharacteristicKind::Rid => Ok(LightCharacteristic::Rid(load_rid_csv(&path)?)),
        CharacteristicKind::Grid => Ok(LightCharacteristic::Grid(load_grid_csv(&path)?)),
    }
}

/// Loads manifest, characteristic and every view image. Rotations are
/// checked for orthonormality and images for matching sensor size.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = load_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let characteristic = load_characteristic(dir, &manifest.characteristic)?;
    let mut views = Vec::with_capacity(manifest.views.len());
    for (index, entry) in manifest.views.iter().enumerate() {
        let pose = entry
            .pose()
            .map_err(|e| Error::file(manifest_path.display(), format!("view {index}: {e}")))?;
        if !(entry.exposure.is_finite() && entry.exposure > 0.0) {
            return Err(Error::file(
                manifest_path.display(),
                format!("view {index}: exposure must be positive"),
            ));
        }
        let image_path = dir.join(&entry.image);
        let mut image = load_image(&image_path)?;
        if image.width != manifest.intrinsics.width || image.height != manifest.intrinsics.height {
            return Err(Error::file(
                image_path.display(),
                format!(
                    "image is {}x{} but the intrinsics specify {}x{}",
                    image.width, image.height, manifest.intrinsics.width, manifest.intrinsics.height
                ),
            ));
        }
        if entry.exposure != 1.0 {
            for v in &mut image.data {
                *v *= entry.exposure;
            }
        }
        views.push(ViewRecord { pose, image, exposure: entry.exposure });
    }
    Ok(Dataset { intrinsics: manifest.intrinsics, characteristic, views })
}

fn load_image(path: &Path) -> Result<ImageBuffer> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => read_pfm(path),
        Some("pgm") => read_pgm16(path),
        _ => Err(Error::file(
            path.display(),
            "unsupported image extension (expected .pfm or .pgm)",
        )),
    }
}

/// Light pose and scale as stored in files: positions in meters (camera
/// frame), angles in degrees. `yaw_deg` is only meaningful for grid
/// characteristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightFile {
    pub position: [f64; 3],
    pub roll_deg: f64,
    pub pitch_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw_deg: Option<f64>,
    pub scale: f64,
}

impl LightFile {
    pub fn from_model(model: &LightModel) -> Self {
        Self {
            position: [model.position.x, model.position.y, model.position.z],
            roll_deg: model.orientation.roll.to_degrees(),
            pitch_deg: model.orientation.pitch.to_degrees(),
            yaw_deg: model
                .characteristic
                .has_yaw()
                .then(|| model.orientation.yaw.to_degrees()),
            scale: model.scale,
        }
    }

    pub fn to_model(&self, characteristic: LightCharacteristic) -> Result<LightModel> {
        LightModel::new(
            Vector3::new(self.position[0], self.position[1], self.position[2]),
            LightOrientation::new(
                self.roll_deg.to_radians(),
                self.pitch_deg.to_radians(),
                self.yaw_deg.unwrap_or(0.0).to_radians(),
            ),
            characteristic,
            self.scale,
        )
    }
}

pub fn save_light(light: &LightFile, path: &Path) -> Result<()> {
    write_json(light, path)
}

pub fn load_light(path: &Path) -> Result<LightFile> {
    read_json(path)
}

/// Spread statistics of the estimates over all view subsets of one size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSizeStats {
    pub views: usize,
    pub subsets: usize,
    pub pitch_mean_deg: f64,
    pub pitch_std_deg: f64,
    pub roll_std_deg: f64,
    pub position_std_m: f64,
    pub scale_rel_std: f64,
}

/// Calibration output as written to disk. Serialization is lossless:
/// reading a written report yields an equal value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultReport {
    pub version: u32,
    pub light: LightFile,
    pub status: ConvergenceStatus,
    pub final_cost: f64,
    pub iterations: usize,
    pub per_view_rms: Vec<f64>,
    pub cost_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub views_used: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_consistency: Option<Vec<SubsetSizeStats>>,
}

pub fn save_report(report: &ResultReport, path: &Path) -> Result<()> {
    write_json(report, path)
}

pub fn load_report(path: &Path) -> Result<ResultReport> {
    read_json(path)
}

pub fn save_rid_csv(curve: &RidCurve, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::file(path.display(), e.to_string()))?;
    writer.write_record(["theta_deg", "intensity"])?;
    for (theta_deg, intensity) in curve.samples_deg() {
        writer.serialize((theta_deg, intensity))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_rid_csv(path: &Path) -> Result<RidCurve> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::file(path.display(), e.to_string()))?;
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "theta_deg" || &headers[1] != "intensity" {
        return Err(Error::file(
            path.display(),
            "expected CSV header 'theta_deg,intensity'",
        ));
    }
    let mut samples = Vec::new();
    for record in reader.deserialize() {
        let sample: (f64, f64) = record?;
        samples.push(sample);
    }
    RidCurve::from_samples_deg(&samples).map_err(|e| Error::file(path.display(), e.to_string()))
}

pub fn save_grid_csv(grid: &RadianceGrid, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path.display(), e.to_string()))?;
    let mut writer = csv::WriterBuilder::new()
        .flexible(true)
        .from_writer(BufWriter::new(file));
    let (n_theta, n_phi) = grid.dimensions();
    writer.write_record(["n_theta", "n_phi"])?;
    writer.write_record([n_theta.to_string(), n_phi.to_string()])?;
    for row in grid.values().chunks(n_phi) {
        let mut record = csv::StringRecord::new();
        for v in row {
            // Display for f64 prints the shortest representation that
            // parses back to the same value.
            record.push_field(&v.to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_grid_csv(path: &Path) -> Result<RadianceGrid> {
    let file = File::open(path).map_err(|e| Error::file(path.display(), e.to_string()))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| Error::file(path.display(), "empty grid file"))??;
    if header.len() != 2 || &header[0] != "n_theta" || &header[1] != "n_phi" {
        return Err(Error::file(path.display(), "expected CSV header 'n_theta,n_phi'"));
    }
    let dims = records
        .next()
        .ok_or_else(|| Error::file(path.display(), "missing grid dimensions"))??;
    let parse_dim = |field: &str, what: &str| -> Result<usize> {
        field
            .trim()
            .parse()
            .map_err(|_| Error::file(path.display(), format!("bad {what} '{field}'")))
    };
    if dims.len() != 2 {
        return Err(Error::file(path.display(), "dimension row must hold two values"));
    }
    let n_theta = parse_dim(&dims[0], "n_theta")?;
    let n_phi = parse_dim(&dims[1], "n_phi")?;
    let mut values = Vec::with_capacity(n_theta * n_phi);
    for (row_index, record) in records.enumerate() {
        let record = record?;
        if record.len() != n_phi {
            return Err(Error::file(
                path.display(),
                format!("grid row {row_index} has {} values, expected {n_phi}", record.len()),
            ));
        }
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::file(path.display(), format!("bad grid value '{field}'"))
            })?;
            values.push(v);
        }
    }
    RadianceGrid::new(n_theta, n_phi, values)
        .map_err(|e| Error::file(path.display(), e.to_string()))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path.display(), e.to_string()))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::file(path.display(), e.to_string()))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::file(path.display(), e.to_string()))
}
