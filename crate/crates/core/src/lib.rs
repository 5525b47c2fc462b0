//! On-the-fly augmented-reality guidance for fluoroscopy, simulated end to end.
//!
//! A C-arm X-ray camera and a head-mounted display (HMD) are co-calibrated
//! through a planar marker that is visible in both modalities. Once the
//! C-arm is locked to the HMD's self-built world map, pixel annotations on
//! X-ray images become rays, triangulated points, planes and trajectories in
//! that world frame.
//!
//! Transform naming follows one rule throughout the crate: `a_to_b` maps
//! coordinates expressed in frame `a` into frame `b`, and chains compose
//! right to left, `a_to_c = b_to_c ∘ a_to_b`.
//!
//! Modules:
//!
//! - [`geometry`]: rigid transforms, the frame graph and the pinhole camera.
//! - [`fiducial`]: the two-modality marker, log subtraction, corner detection
//!   and planar pose estimation.
//! - [`tracking`]: simulated SLAM drift and the lock calibration.
//! - [`guidance`]: annotations turned into 3-D guidance geometry.
//! - [`simulator`]: scenes, X-ray/RGB rendering and the experiment harness.
//! - [`stream`]: the framed TCP image link and its test client.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fiducial;
pub mod geometry;
pub mod guidance;
pub mod simulator;
pub mod stream;
pub mod textfmt;
pub mod tracking;

pub use geometry::{FrameGraph, FrameId, ProjectiveCamera, Ray3, RigidTransform, TimedPose};
