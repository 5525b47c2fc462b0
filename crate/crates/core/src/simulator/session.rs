//! A live imaging session: the rig, a standing HMD with drifting self-
//! tracking, and the two named C-arm views an operator can acquire from.

use std::fmt;
use std::str::FromStr;

use crate::fiducial::Image2D;
use crate::geometry::RigidTransform;
use crate::tracking::{
    lock_calibration, CalibrationRecord, LockCameras, MarkerPlacement, RgbAcquisition, SlamConfig,
    SlamSimulator, Trajectory, XrayAcquisition,
};

use super::experiments::NoiseConfig;
use super::{mix_seed, render_rgb, render_xray, RgbShading, Rig, SceneConfig, SimulatorError};

/// Views a session can acquire: the reference gantry angle and the second
/// view of the landmark protocol.
pub const VIEWS: [&str; 2] = ["view1", "view2"];

/// Length of the simulated tracking timeline, seconds.
pub const SESSION_SECONDS: usize = 3600;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameKind {
    /// The clinical shot: phantom only.
    Xray,
    /// Phantom with the marker in place.
    XrayMarker,
    /// The HMD's front camera.
    Rgb,
}

impl FrameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Xray => "xray",
            FrameKind::XrayMarker => "xray_marker",
            FrameKind::Rgb => "rgb",
        }
    }

    /// Camera that produced the frame.
    pub fn camera(self) -> &'static str {
        match self {
            FrameKind::Rgb => "rgb",
            _ => "xray",
        }
    }
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FrameKind {
    type Err = SimulatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xray" => Ok(FrameKind::Xray),
            "xray_marker" => Ok(FrameKind::XrayMarker),
            "rgb" => Ok(FrameKind::Rgb),
            other => Err(SimulatorError::Config(format!("unknown frame kind {other:?}"))),
        }
    }
}

/// Scene plus tracking shared read-only by everyone talking to one server.
pub struct SimulatorSession {
    pub rig: Rig,
    pub seed: u64,
    lab_to_hmd: RigidTransform,
    tracker: SlamSimulator,
}

impl SimulatorSession {
    /// HMD drift uses the default SLAM noise, seeded from `seed`.
    pub fn new(scene: SceneConfig, seed: u64) -> Result<Self, SimulatorError> {
        let rig = Rig::new(scene)?;
        let lab_to_hmd = rig.lab_to_hmd(&rig.config.hmd.placement);
        let noise = NoiseConfig::default();
        let slam = SlamConfig {
            sigma_translation: noise.slam_translation_mm,
            sigma_rotation: noise.slam_rotation_deg,
            seed: mix_seed(seed, 0),
            ..SlamConfig::default()
        };
        let trajectory = Trajectory::stationary(rig.w_to_hmd(&lab_to_hmd), 1.0, SESSION_SECONDS);
        let tracker = SlamSimulator::new(&slam, trajectory)?;
        Ok(Self {
            rig,
            seed,
            lab_to_hmd,
            tracker,
        })
    }

    pub fn gantry_deg(&self, view_id: &str) -> Result<f64, SimulatorError> {
        match view_id {
            "view1" => Ok(0.0),
            "view2" => Ok(self.rig.config.xray.second_view_deg),
            other => Err(SimulatorError::Config(format!(
                "unknown view {other:?} (expected view1 or view2)"
            ))),
        }
    }

    /// Tracked `W → HMD` at session time `t` (clamped to the timeline).
    pub fn w_to_hmd(&self, t: f64) -> Result<RigidTransform, SimulatorError> {
        Ok(self.tracker.pose(t.clamp(0.0, SESSION_SECONDS as f64))?)
    }

    /// Renders one acquisition. Deterministic: the same request always
    /// yields the same image.
    pub fn frame(&self, view_id: &str, kind: FrameKind) -> Result<Image2D, SimulatorError> {
        let rig = &self.rig;
        let i0 = rig.config.xray.i0;
        Ok(match kind {
            FrameKind::Xray => render_xray(
                Some(&rig.phantom),
                None,
                &rig.xray_camera_at(self.gantry_deg(view_id)?),
                i0,
            ),
            FrameKind::XrayMarker => render_xray(
                Some(&rig.phantom),
                Some(&rig.marker),
                &rig.xray_camera_at(self.gantry_deg(view_id)?),
                i0,
            ),
            FrameKind::Rgb => {
                let h = &rig.config.hmd;
                let shading = RgbShading {
                    background: h.background,
                    paper: h.paper,
                    ink: h.ink,
                };
                render_rgb(&rig.marker, &rig.rgb_camera_at(&self.lab_to_hmd), &shading)
            }
        })
    }

    /// Acquires both modalities and locks `view_id` at time `t`. With the
    /// marker removed the subtraction is blank and detection fails.
    pub fn lock(
        &self,
        view_id: &str,
        t: f64,
        marker_present: bool,
    ) -> Result<CalibrationRecord, SimulatorError> {
        let rig = &self.rig;
        let without = self.frame(view_id, FrameKind::Xray)?;
        let with = if marker_present {
            self.frame(view_id, FrameKind::XrayMarker)?
        } else {
            without.clone()
        };
        let xray = XrayAcquisition {
            with_marker: with,
            without_marker: without,
            placement: MarkerPlacement(0),
        };
        let rgb = RgbAcquisition {
            image: self.frame(view_id, FrameKind::Rgb)?,
            placement: MarkerPlacement(0),
        };
        let cams = LockCameras {
            xray: rig.xray_device_camera()?,
            rgb: rig.rgb_device_camera()?,
        };
        Ok(lock_calibration(
            view_id,
            t,
            &xray,
            &rgb,
            &cams,
            &self.w_to_hmd(t)?,
            &rig.marker.model,
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiducial::FiducialError;
    use crate::tracking::TrackingError;

    #[test]
    fn lock_lands_near_truth_and_fails_without_marker() {
        let s = SimulatorSession::new(SceneConfig::default(), 3).unwrap();
        let rec = s.lock("view2", 0.0, true).unwrap();
        // at t = 0 the tracker has not drifted yet
        assert!(rec.c_to_w.translation_distance(&s.rig.c_to_w(15.0)) < 1e-6);
        assert!(matches!(
            s.lock("view1", 1.0, false),
            Err(SimulatorError::Tracking(TrackingError::Fiducial(
                FiducialError::NotFound
            )))
        ));
        assert!(s.gantry_deg("view3").is_err());
    }

    #[test]
    fn frame_kinds_parse() {
        for k in [FrameKind::Xray, FrameKind::XrayMarker, FrameKind::Rgb] {
            assert_eq!(k.as_str().parse::<FrameKind>().unwrap(), k);
        }
        assert!("ct".parse::<FrameKind>().is_err());
    }
}
