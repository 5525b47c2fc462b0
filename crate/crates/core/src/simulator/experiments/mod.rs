//! The phantom studies as seeded Monte-Carlo experiments.
//!
//! Every experiment is a pure function of an [`ExperimentConfig`]: trials
//! draw from their own ChaCha8 streams derived from the configured seed, run
//! in parallel, and are collected in trial order, so results are
//! bit-reproducible regardless of thread count.

mod calibration;
mod demo;
mod guidance;
mod landmarks;
mod tracking;

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    mix_seed, render_rgb, render_xray, MarkerInstance, RgbShading, Rig, SceneConfig, SimulatorError,
};
use crate::fiducial::{detect_corners, log_subtract, CornerObservation, Polarity, SubtractionConfig};
use crate::geometry::{ProjectiveCamera, RigidTransform};
use crate::textfmt;
use crate::tracking::{calibrate_from_observations, CalibrationRecord};

pub use calibration::{
    run_experiment_calibration, CalibrationMeasurement, CalibrationReport, CalibrationSettings,
};
pub use demo::{run_demo_twoview, DemoReport, DemoRun, DemoSettings};
pub use guidance::{run_experiment_guidance, GuidanceAttempt, GuidanceReport, GuidanceSettings};
pub use landmarks::{run_experiment_landmarks, LandmarkEstimate, LandmarkReport, LandmarkSettings};
pub use tracking::{run_experiment_tracking, TrackingReport, TrackingSample, TrackingSettings};

/// Noise injected into the simulated measurements. Corner and annotation
/// noise is isotropic Gaussian per pixel coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Marker corners in the X-ray subtraction image, px.
    pub xray_corner_px: f64,
    /// Marker corners in the HMD camera image, px.
    pub rgb_corner_px: f64,
    /// Clicked annotations, px.
    pub annotation_px: f64,
    /// SLAM random-walk translation per step and axis, mm.
    pub slam_translation_mm: f64,
    /// SLAM random-walk rotation per step, degrees.
    pub slam_rotation_deg: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            xray_corner_px: 0.5,
            rgb_corner_px: 0.5,
            annotation_px: 1.0,
            slam_translation_mm: 0.2,
            slam_rotation_deg: 0.02,
        }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self::default().scaled(0.0)
    }

    /// Every sigma multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            xray_corner_px: self.xray_corner_px * factor,
            rgb_corner_px: self.rgb_corner_px * factor,
            annotation_px: self.annotation_px * factor,
            slam_translation_mm: self.slam_translation_mm * factor,
            slam_rotation_deg: self.slam_rotation_deg * factor,
        }
    }

    pub fn validate(&self) -> Result<(), SimulatorError> {
        let all = [
            self.xray_corner_px,
            self.rgb_corner_px,
            self.annotation_px,
            self.slam_translation_mm,
            self.slam_rotation_deg,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(SimulatorError::Config(
                "noise sigmas must be finite and ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

/// How the marker corners are obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImagingMode {
    /// Render both modalities, log-subtract, and run the detector. The
    /// noiseless detection of each distinct geometry is computed once and
    /// reused by all trials.
    #[default]
    Rendered,
    /// Project the model corners directly.
    ProjectedCorners,
}

/// Configuration shared by all experiments; each reads its own section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub imaging: ImagingMode,
    pub scene: SceneConfig,
    pub noise: NoiseConfig,
    pub calibration: CalibrationSettings,
    pub tracking: TrackingSettings,
    pub landmarks: LandmarkSettings,
    pub guidance: GuidanceSettings,
    pub operator: super::VirtualOperator,
    pub demo: DemoSettings,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        self.noise.validate()?;
        self.operator.validate()
    }
}

/// Rows of a per-trial CSV file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Common interface of experiment results.
pub trait ExperimentReport {
    /// One row per trial.
    fn trials(&self) -> Table;
    /// Human-readable summary in the `(mean, std)` tuple format.
    fn summary_text(&self) -> String;
}

/// Reference values measured on the physical system, printed next to the
/// simulated results for context only.
pub const REFERENCE_LABEL: &str = "reference (physical system)";

pub(crate) fn num(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn rng_for(seed: u64, trial: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(seed, trial), stream))
}

/// Independent random streams within one trial.
pub(crate) mod stream {
    pub const XRAY: u64 = 1;
    pub const RGB: u64 = 2;
    pub const ANNOTATION: u64 = 3;
    pub const SLAM: u64 = 4;
    pub const OPERATOR: u64 = 5;
}

pub(crate) fn gaussian_2d(sigma: f64, rng: &mut ChaCha8Rng) -> Vector2<f64> {
    if sigma == 0.0 {
        return Vector2::zeros();
    }
    let n = Normal::new(0.0, sigma).expect("validated sigma");
    Vector2::new(n.sample(rng), n.sample(rng))
}

pub(crate) fn jitter(obs: &CornerObservation, sigma: f64, rng: &mut ChaCha8Rng) -> CornerObservation {
    let mut out = obs.clone();
    for c in out.corners.iter_mut() {
        *c += gaussian_2d(sigma, rng);
    }
    out
}

/// Produces marker corner observations for the rig in either imaging mode.
pub(crate) struct Observer<'a> {
    pub rig: &'a Rig,
    pub mode: ImagingMode,
    pub xray: ProjectiveCamera,
    pub rgb: ProjectiveCamera,
}

impl<'a> Observer<'a> {
    pub fn new(rig: &'a Rig, mode: ImagingMode) -> Result<Self, SimulatorError> {
        Ok(Self {
            rig,
            mode,
            xray: rig.xray_device_camera()?,
            rgb: rig.rgb_device_camera()?,
        })
    }

    pub fn lock_cameras(&self) -> crate::tracking::LockCameras {
        crate::tracking::LockCameras {
            xray: self.xray,
            rgb: self.rgb,
        }
    }

    /// Corners of `marker` in the X-ray image at `gantry_deg`.
    pub fn xray_corners(
        &self,
        gantry_deg: f64,
        marker: &MarkerInstance,
    ) -> Result<CornerObservation, SimulatorError> {
        let cam = self.rig.xray_camera_at(gantry_deg);
        match self.mode {
            ImagingMode::ProjectedCorners => project_corners(&cam, marker, "xray"),
            ImagingMode::Rendered => {
                let i0 = self.rig.config.xray.i0;
                let scene = Some(&self.rig.phantom);
                let with = render_xray(scene, Some(marker), &cam, i0);
                let without = render_xray(scene, None, &cam, i0);
                let sub = log_subtract(&with, &without, &SubtractionConfig::relative_to(&without))?;
                Ok(detect_corners(&sub, Polarity::BrightOnDark)?.with_view("xray"))
            }
        }
    }

    /// Corners of `marker` in the HMD camera image for an HMD at `lab_to_hmd`.
    pub fn rgb_corners(
        &self,
        lab_to_hmd: &RigidTransform,
        marker: &MarkerInstance,
    ) -> Result<CornerObservation, SimulatorError> {
        let cam = self.rig.rgb_camera_at(lab_to_hmd);
        match self.mode {
            ImagingMode::ProjectedCorners => project_corners(&cam, marker, "rgb"),
            ImagingMode::Rendered => {
                let h = &self.rig.config.hmd;
                let shading = RgbShading {
                    background: h.background,
                    paper: h.paper,
                    ink: h.ink,
                };
                let img = render_rgb(marker, &cam, &shading);
                Ok(detect_corners(&img, Polarity::DarkOnBright)?.with_view("rgb"))
            }
        }
    }
}

fn project_corners(
    cam: &ProjectiveCamera,
    marker: &MarkerInstance,
    view: &str,
) -> Result<CornerObservation, SimulatorError> {
    let mut px = [Vector2::zeros(); 4];
    for (p, c) in px.iter_mut().zip(marker.corners_lab()) {
        *p = cam
            .project(&c)
            .map_err(|e| SimulatorError::Failed(format!("marker corner not visible: {e}")))?;
    }
    Ok(CornerObservation::new(px, view)?)
}

/// One lock event from noiseless corners plus fresh corner noise.
#[allow(clippy::too_many_arguments)]
pub(crate) fn noisy_lock(
    observer: &Observer<'_>,
    view_id: &str,
    t0: f64,
    clean: &(CornerObservation, CornerObservation),
    w_to_hmd_est: &RigidTransform,
    noise: &NoiseConfig,
    xray_rng: &mut ChaCha8Rng,
    rgb_rng: &mut ChaCha8Rng,
) -> Result<CalibrationRecord, SimulatorError> {
    let x = jitter(&clean.0, noise.xray_corner_px, xray_rng).with_view(view_id);
    let r = jitter(&clean.1, noise.rgb_corner_px, rgb_rng).with_view(view_id);
    Ok(calibrate_from_observations(
        view_id,
        t0,
        &x,
        &r,
        &observer.lock_cameras(),
        w_to_hmd_est,
        &observer.rig.marker.model,
    )?)
}

/// Pixel of a lab-frame point in the X-ray image at `gantry_deg`, plus
/// annotation noise.
pub(crate) fn annotate(
    rig: &Rig,
    gantry_deg: f64,
    point_lab: &Vector3<f64>,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vector2<f64>, SimulatorError> {
    let cam = rig.xray_camera_at(gantry_deg);
    let px = cam
        .project(point_lab)
        .map_err(|e| SimulatorError::Failed(format!("target not visible: {e}")))?;
    Ok(px + gaussian_2d(sigma, rng))
}

/// `(mean, std)` with three significant digits.
pub(crate) fn tuple(v: (f64, f64)) -> String {
    textfmt::tuple(v.0, v.1)
}

/// Text table with a label column and right-padded cells.
pub(crate) fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            let pad = widths[i] - c.chars().count();
            s += c;
            if i + 1 < cols {
                s += &" ".repeat(pad + 2);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    out += &(widths
        .iter()
        .map(|w| "-".repeat(*w))
        .collect::<Vec<_>>()
        .join("  ")
        + "\n");
    for r in rows {
        out += &line(r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_independent_per_stream() {
        let a = mix_seed(mix_seed(7, 0), stream::XRAY);
        let b = mix_seed(mix_seed(7, 0), stream::RGB);
        let c = mix_seed(mix_seed(7, 1), stream::XRAY);
        assert!(a != b && a != c && b != c);
    }

    #[test]
    fn noise_scaling() {
        assert_eq!(NoiseConfig::default().scaled(0.0), NoiseConfig::zero());
        assert!(NoiseConfig {
            annotation_px: -1.0,
            ..NoiseConfig::zero()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn rendered_and_projected_corners_agree() {
        let rig = Rig::default_rig();
        let r = Observer::new(&rig, ImagingMode::Rendered).unwrap();
        let p = Observer::new(&rig, ImagingMode::ProjectedCorners).unwrap();
        let a = r.xray_corners(0.0, &rig.marker).unwrap();
        let b = p.xray_corners(0.0, &rig.marker).unwrap();
        for (x, y) in a.corners.iter().zip(&b.corners) {
            assert!((x - y).norm() < 1e-6, "{x} vs {y}");
        }
        let hmd = rig.lab_to_hmd(&rig.config.hmd.placement);
        let a = r.rgb_corners(&hmd, &rig.marker).unwrap();
        let b = p.rgb_corners(&hmd, &rig.marker).unwrap();
        for (x, y) in a.corners.iter().zip(&b.corners) {
            assert!((x - y).norm() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn table_layout() {
        let t = render_table(
            &["".into(), "a".into()],
            &[vec!["row".into(), "(1.00, 2.00)".into()]],
        );
        assert_eq!(t, "     a\n---  ------------\nrow  (1.00, 2.00)\n");
    }
}
