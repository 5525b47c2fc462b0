//! The two-modality marker: model, image handling, detection and pose.

mod detect;
mod homography;
mod image;
mod marker;
mod pose;
mod subtraction;

use thiserror::Error;

pub use detect::{detect_corners, CornerObservation, Polarity};
pub use homography::{collinearity_measure, homography_4pt};
pub use image::Image2D;
pub use marker::{MarkerModel, DEFAULT_SIDE_MM};
pub use pose::{estimate_extrinsic, estimate_pose, mean_reprojection_error};
pub use subtraction::{log_subtract, SubtractionConfig, RELATIVE_EPSILON};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FiducialError {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid marker: {0}")]
    InvalidMarker(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("image dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("no marker found")]
    NotFound,
    #[error("{0} candidate markers found")]
    Ambiguous(usize),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
}
