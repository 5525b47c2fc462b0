//! HMD tracking: the marker is fixed, the HMD walks through a sequence of
//! viewpoints, and at each stop the marker is re-anchored in the world map.
//! The corner discrepancy against the first anchoring measures tracking drift
//! plus re-detection noise.

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    jitter, num, render_table, rng_for, stream, tuple, ExperimentConfig, ExperimentReport, Observer, Table,
};
use crate::fiducial::estimate_pose;
use crate::geometry::RigidTransform;
use crate::simulator::{aggregate, default_hmd_placements, rms, HmdPlacement, Rig, SimulatorError};
use crate::tracking::{anchor_marker, SlamConfig, SlamSimulator, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingSettings {
    pub repetitions: usize,
    /// Viewpoints visited after the reference viewpoint.
    pub placements: Vec<HmdPlacement>,
    /// Interpolated tracking steps between consecutive viewpoints.
    pub steps_between: usize,
    /// Tracking period, s.
    pub dt: f64,
}

impl Default for TrackingSettings {
    fn default() -> Self {
        Self {
            repetitions: 6,
            placements: default_hmd_placements(),
            steps_between: 20,
            dt: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackingSample {
    pub repetition: usize,
    /// 1-based index of the viewpoint.
    pub reposition: usize,
    /// RMS distance of the four re-anchored corners to the reference, mm.
    pub corner_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackingReport {
    pub samples: Vec<TrackingSample>,
    /// RMS over all corner points of all repositions, mm.
    pub rmse: f64,
    /// Mean and standard deviation of the per-reposition RMSE, mm.
    pub per_reposition: (f64, f64),
    pub reference_mm: (f64, f64),
}

pub fn run_experiment_tracking(cfg: &ExperimentConfig) -> Result<TrackingReport, SimulatorError> {
    cfg.validate()?;
    let s = &cfg.tracking;
    if s.repetitions == 0 || s.placements.is_empty() {
        return Err(SimulatorError::Config(
            "tracking needs repetitions and at least one reposition".into(),
        ));
    }
    if !(s.dt > 0.0 && s.dt.is_finite()) {
        return Err(SimulatorError::Config("tracking dt must be positive".into()));
    }
    let rig = Rig::new(cfg.scene.clone())?;
    let observer = Observer::new(&rig, cfg.imaging)?;
    let marker = rig.marker;

    let mut stops = vec![rig.lab_to_hmd(&rig.config.hmd.placement)];
    stops.extend(s.placements.iter().map(|p| rig.lab_to_hmd(p)));
    let clean = stops
        .par_iter()
        .map(|h| observer.rgb_corners(h, &marker))
        .collect::<Result<Vec<_>, _>>()?;

    let stride = s.steps_between + 1;
    let mut path = Vec::with_capacity((stops.len() - 1) * stride + 1);
    for pair in stops.windows(2) {
        for k in 0..stride {
            path.push(rig.w_to_hmd(&interpolate(&pair[0], &pair[1], k as f64 / stride as f64)));
        }
    }
    path.push(rig.w_to_hmd(stops.last().expect("non-empty")));
    let trajectory = Trajectory::new(s.dt, path).map_err(SimulatorError::from)?;
    let corners_m = marker.model.corner_points();

    let reps = (0..s.repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rr = rng_for(cfg.seed, rep as u64, stream::RGB);
            let slam = SlamConfig {
                sigma_translation: cfg.noise.slam_translation_mm,
                sigma_rotation: cfg.noise.slam_rotation_deg,
                seed: rng_for(cfg.seed, rep as u64, stream::SLAM).random(),
                ..SlamConfig::default()
            };
            let tracker = SlamSimulator::new(&slam, trajectory.clone())?;
            let anchors = clean
                .iter()
                .enumerate()
                .map(|(i, obs)| {
                    let t = (i * stride) as f64 * s.dt;
                    let obs = jitter(obs, cfg.noise.rgb_corner_px, &mut rr);
                    let hmd_to_m = estimate_pose(&obs, &observer.rgb, &marker.model)?;
                    Ok(anchor_marker(&tracker.pose(t)?, &hmd_to_m))
                })
                .collect::<Result<Vec<RigidTransform>, SimulatorError>>()?;
            let reference = anchors[0];
            Ok(anchors[1..]
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let d: Vec<f64> = corners_m
                        .iter()
                        .map(|c| (a.apply_point(c) - reference.apply_point(c)).norm())
                        .collect();
                    TrackingSample {
                        repetition: rep,
                        reposition: i + 1,
                        corner_rmse: rms(&d),
                    }
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, SimulatorError>>()?;

    let samples: Vec<TrackingSample> = reps.into_iter().flatten().collect();
    let per: Vec<f64> = samples.iter().map(|x| x.corner_rmse).collect();
    Ok(TrackingReport {
        // every sample holds four corners, so the pooled RMS is the RMS of RMSEs
        rmse: rms(&per),
        per_reposition: aggregate(&per),
        samples,
        reference_mm: (16.2, 9.5),
    })
}

/// Pose between `a` and `b`: linear in the camera center, spherical-linear
/// in the orientation.
fn interpolate(a: &RigidTransform, b: &RigidTransform, s: f64) -> RigidTransform {
    let (ia, ib) = (a.inverse(), b.inverse());
    let qa = UnitQuaternion::from_rotation_matrix(&ia.rotation3());
    let qb = UnitQuaternion::from_rotation_matrix(&ib.rotation3());
    let q = qa.slerp(&qb, s);
    let c: Vector3<f64> = ia.translation().lerp(ib.translation(), s);
    RigidTransform::from_parts(q.to_rotation_matrix(), c).inverse()
}

impl ExperimentReport for TrackingReport {
    fn trials(&self) -> Table {
        let mut t = Table::new(&["repetition", "reposition", "corner_rmse_mm"]);
        for s in &self.samples {
            t.push(vec![
                s.repetition.to_string(),
                s.reposition.to_string(),
                num(s.corner_rmse),
            ]);
        }
        t
    }

    fn summary_text(&self) -> String {
        let header = ["".to_string(), "simulated".into(), super::REFERENCE_LABEL.into()];
        let rows = vec![
            vec![
                "RMSE over all corners (mm)".to_string(),
                format!("{:.2}", self.rmse),
                "16.2".into(),
            ],
            vec![
                "per-reposition RMSE (mm)".to_string(),
                tuple(self.per_reposition),
                tuple(self.reference_mm),
            ],
        ];
        format!(
            "HMD tracking over {} repositions\n{}",
            self.samples.len(),
            render_table(&header, &rows)
        )
    }
}
