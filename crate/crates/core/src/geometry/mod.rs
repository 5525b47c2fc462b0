//! Rigid-transform algebra, the frame graph and the pinhole camera model.
//!
//! Text formats:
//!
//! - transforms: one per line, 12 numbers (`R` row-major, then `t` in mm),
//!   `#` starts a comment line;
//! - cameras: `key=value` lines `fx`, `fy`, `cx`, `cy`, `width`, `height`
//!   and `extrinsic` (the 12 numbers of the world-to-camera transform).

mod camera;
mod frames;
mod transform;

use thiserror::Error;

pub use camera::{ProjectiveCamera, Ray3, MIN_DEPTH};
pub use frames::{FrameGraph, FrameId, TimedPose};
pub use transform::{
    chordal_mean, geodesic_angle, orthonormality_error, project_to_so3, RigidTransform, ORTHONORMAL_TOLERANCE,
};

use crate::textfmt;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("no path from {from} to {to}")]
    NoPath { from: String, to: String },
    #[error("more than one path from {from} to {to}; the frame graph must be a tree")]
    AmbiguousPath { from: String, to: String },
    #[error("point is behind the camera (depth {depth} mm)")]
    BehindCamera { depth: f64 },
    #[error("pose {from}->{to} at t={timestamp} already stored")]
    DuplicatePose {
        from: String,
        to: String,
        timestamp: f64,
    },
    #[error("invalid timestamp {0}")]
    InvalidTimestamp(f64),
    #[error("frame {0} cannot map to itself")]
    SelfLoop(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Writes transforms one per line.
pub fn write_transforms(transforms: &[RigidTransform]) -> String {
    let mut out = String::new();
    for t in transforms {
        out.push_str(&textfmt::join_numbers(&t.to_row_major()));
        out.push('\n');
    }
    out
}

pub fn parse_transform(line: &str) -> Result<RigidTransform, GeometryError> {
    let nums = textfmt::parse_numbers(line).map_err(GeometryError::Parse)?;
    let arr: [f64; 12] = nums
        .try_into()
        .map_err(|v: Vec<f64>| GeometryError::Parse(format!("expected 12 numbers, got {}", v.len())))?;
    RigidTransform::from_row_major(&arr).ok_or_else(|| GeometryError::Parse("not a rigid transform".into()))
}

pub fn read_transforms(text: &str) -> Result<Vec<RigidTransform>, GeometryError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(parse_transform)
        .collect()
}

pub fn write_camera(cam: &ProjectiveCamera) -> String {
    format!(
        "fx={}\nfy={}\ncx={}\ncy={}\nwidth={}\nheight={}\nextrinsic={}\n",
        cam.fx,
        cam.fy,
        cam.cx,
        cam.cy,
        cam.width,
        cam.height,
        textfmt::join_numbers(&cam.extrinsic.to_row_major())
    )
}

pub fn read_camera(text: &str) -> Result<ProjectiveCamera, GeometryError> {
    let map = textfmt::parse_key_values(text).map_err(GeometryError::Parse)?;
    camera_from_map(&map)
}

pub(crate) fn camera_from_map(
    map: &std::collections::BTreeMap<String, String>,
) -> Result<ProjectiveCamera, GeometryError> {
    let p = |k: &str| textfmt::take_f64(map, k).map_err(GeometryError::Parse);
    let u = |k: &str| textfmt::take_u32(map, k).map_err(GeometryError::Parse);
    let extrinsic = parse_transform(textfmt::take(map, "extrinsic").map_err(GeometryError::Parse)?)?;
    ProjectiveCamera::new(
        p("fx")?,
        p("fy")?,
        p("cx")?,
        p("cy")?,
        u("width")?,
        u("height")?,
        extrinsic,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_file_round_trip() {
        let ts = vec![
            RigidTransform::identity(),
            RigidTransform::rot_y(0.7).compose(&RigidTransform::translate(1.5, -2.0, 1e3)),
        ];
        let text = format!("# two poses\n{}", write_transforms(&ts));
        assert_eq!(read_transforms(&text).unwrap(), ts);
        assert!(read_transforms("1 2 3").is_err());
    }

    #[test]
    fn camera_file_round_trip() {
        let cam = ProjectiveCamera::centered(1200.0, 1024, 1024)
            .unwrap()
            .with_extrinsic(RigidTransform::rot_x(0.1).compose(&RigidTransform::translate(0.0, 0.0, 900.0)));
        assert_eq!(read_camera(&write_camera(&cam)).unwrap(), cam);
        assert!(read_camera("fx=1").is_err());
    }
}
