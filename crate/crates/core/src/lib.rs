//! Calibration of a point light rigidly mounted to a camera.
//!
//! Given multi-view linear images of a flat Lambertian reference plane
//! (the z = 0 plane of the world frame) with known camera intrinsics and
//! extrinsics, this crate estimates the light's pose relative to the
//! camera — position plus the roll/pitch of its central axis — and a
//! scale factor linking its relative radiation intensity distribution to
//! pixel values. Estimation is analysis-by-synthesis: an
//! energy-preserving forward model renders candidate intensities, and
//! damped nonlinear least squares minimizes the difference to the
//! measured pixels.
//!
//! Modules:
//! - [`geometry`]: camera model, back-projection onto the plane, solid
//!   angles of projected pixel quads.
//! - [`photometry`]: RID curves, radiance grids, Lambertian reflection
//!   and the per-pixel renderer.
//! - [`solver`]: pixel sampling, residual/Jacobian evaluation,
//!   Levenberg-Marquardt.
//! - [`synth`]: synthetic dataset generation with known ground truth.
//! - [`dataset`]: manifest, report and characteristic file formats.
//! - [`raster`]: linear image buffers, PFM/PGM containers.

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod photometry;
pub mod raster;
pub mod solver;
pub mod synth;

pub use dataset::{Dataset, DatasetManifest, LightFile, ResultReport, ViewRecord};
pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, CameraPose, Distortion, PlaneQuad};
pub use photometry::{
    LightCharacteristic, LightModel, LightOrientation, RadianceGrid, RenderedImage, RidCurve,
    WorldLight,
};
pub use raster::ImageBuffer;
pub use solver::{
    CalibrationProblem, CalibrationResult, ConvergenceStatus, ParameterVector, PixelSample,
    SamplingOptions, SolverOptions,
};
pub use synth::{GeneratedDataset, GroundTruth, ScenarioSpec};
