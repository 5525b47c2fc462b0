//! Ground-truth scenes, synthetic X-ray and RGB imaging, and the experiment
//! harness that reproduces the phantom studies with configurable noise.

pub mod experiments;
mod operator;
mod render;
mod scene;
mod session;
mod stats;

use thiserror::Error;

use crate::fiducial::FiducialError;
use crate::guidance::GuidanceError;
use crate::tracking::TrackingError;

pub use operator::VirtualOperator;
pub use render::{render_line_integral, render_rgb, render_xray, RgbShading};
pub use scene::{
    default_hmd_placements, default_marker_displacements, look_at, marker_displacement, reference_clutter,
    Bead, Clutter, HmdConfig, HmdPlacement, MarkerConfig, MarkerInstance, PhantomConfig, PhantomScene, Rig,
    SceneConfig, XrayConfig, DEFAULT_MARKER_DISPLACEMENTS,
};
pub use session::{FrameKind, SimulatorSession, SESSION_SECONDS, VIEWS};
pub use stats::{aggregate, rms, MetricSummary};

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Fiducial(#[from] FiducialError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error("{0}")]
    Failed(String),
}

/// SplitMix64 finalizer; derives independent per-trial seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
