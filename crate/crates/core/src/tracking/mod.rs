//! HMD self-tracking (simulated SLAM with drift) and the lock calibration
//! that ties the C-arm to the HMD's world map.

mod calibration;
mod slam;

use thiserror::Error;

use crate::fiducial::FiducialError;

pub use calibration::{
    anchor_marker, calibrate_from_observations, lock_calibration, CalibrationRecord, LockCameras,
    MarkerPlacement, RgbAcquisition, XrayAcquisition,
};
pub use slam::{slam_pose, SlamConfig, SlamSimulator, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error(transparent)]
    Fiducial(#[from] FiducialError),
    #[error("marker moved between acquisitions (X-ray placement {xray}, RGB placement {rgb})")]
    StaleMarker { xray: u64, rgb: u64 },
    #[error("time {t} outside the trajectory span [0, {end}]")]
    OutOfRange { t: f64, end: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
}
