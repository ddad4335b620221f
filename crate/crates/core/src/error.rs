use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// Several variants double as soft rejection reasons in the pipeline, see
/// [`crate::pipeline::Rejection`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read image {path}: {source}")]
    ImageRead {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("unsupported pixel format {0}; expected 8/16-bit gray or RGB")]
    UnsupportedFormat(String),
    #[error("expected {expected} channel(s), got {got}")]
    ChannelCount { expected: usize, got: usize },
    #[error("invalid image buffer: {0}")]
    InvalidImage(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no contour chain found")]
    NoContour,
    #[error("edge {edge} fit failed: best support {support} < {min_support}")]
    EdgeFit {
        edge: usize,
        support: usize,
        min_support: usize,
    },
    #[error("found {0} corners, expected 8")]
    CornerCount(usize),
    #[error("duplicate corner points")]
    DuplicateCorners,
    #[error("affine octagon check failed: residual {residual:.4} > limit {limit:.4}")]
    AffineReject { residual: f64, limit: f64 },
    #[error("degenerate view: {0}")]
    DegenerateView(String),
    #[error("non-positive focal solution (alpha={alpha:e}, beta={beta:e})")]
    NegativeFocal { alpha: f64, beta: f64 },
    #[error("point maps to infinity under homography")]
    PointAtInfinity,
    #[error("point behind camera (depth {0})")]
    BehindCamera(f64),
    #[error("target projects outside the frame")]
    OutsideFrame,

    #[error("config error: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
