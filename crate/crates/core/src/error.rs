//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or loader rejected its input.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Pixel coordinates outside the image guard band (10% beyond the
    /// sensor bounds, enough for corner vertices of edge pixels).
    #[error("pixel ({x}, {y}) outside the image guard band")]
    PixelOutOfBounds { x: f64, y: f64 },

    /// Iterative undistortion failed to contract; the distortion
    /// coefficients are not invertible at this pixel.
    #[error("undistortion did not converge (residual {residual_px:.3e} px after {iterations} iterations)")]
    UndistortNonConvergence { residual_px: f64, iterations: usize },

    #[error("viewing ray parallel to the reference plane")]
    RayParallelToPlane,

    #[error("ray-plane intersection behind the camera (lambda = {lambda:.3e})")]
    IntersectionBehindCamera { lambda: f64 },

    /// Spherical quad with duplicate or antipodal vertex directions.
    #[error("degenerate spherical quad: {0}")]
    DegenerateQuad(&'static str),

    /// The light must sit strictly above the z = 0 reference plane.
    #[error("light on or below the reference plane (z = {z:.3e})")]
    LightOnPlane { z: f64 },

    #[error("vanishing distance between {0}")]
    ZeroDistance(&'static str),

    /// Too few stratification cells produced a usable pixel.
    #[error("only {found} of {requested} sampling cells yielded a valid pixel")]
    InsufficientValidPixels { found: usize, requested: usize },

    /// The views do not constrain the light pose (identical poses, or a
    /// normal-equations matrix that stays singular at every iterate).
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    /// Structurally invalid file contents (bad magic, truncated data, ...).
    #[error("{path}: {reason}")]
    FileFormat { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn file(path: impl std::fmt::Display, reason: impl Into<String>) -> Self {
        Error::FileFormat {
            path: path.to_string(),
            reason: reason.into(),
        }
    }
}
