//! Scripted two-view targeting: annotate one landmark in two locked views,
//! triangulate it, and let the operator drive a wire from a free entry point
//! onto the displayed target. The femur study it stands in for also counted
//! X-ray shots and procedure time; those are printed as reference only.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    annotate, noisy_lock, num, render_table, rng_for, stream, tuple, ExperimentConfig, ExperimentReport,
    Observer, Table,
};
use crate::geometry::{Ray3, RigidTransform};
use crate::guidance::{build_geometry, Annotation};
use crate::simulator::{aggregate, Rig, SimulatorError};
use crate::tracking::{SlamConfig, SlamSimulator, Trajectory};

/// X-ray shots of the scripted workflow: a with/without-marker pair per
/// view plus one control shot.
pub const DEMO_ACQUISITIONS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoSettings {
    pub runs: usize,
    /// Index of the targeted bead (0-based).
    pub target: usize,
    /// Tilt of the approach from vertical, degrees.
    pub approach_tilt_deg: f64,
    pub entry_height: f64,
    pub steps_between_views: usize,
    pub dt: f64,
}

impl Default for DemoSettings {
    fn default() -> Self {
        Self {
            runs: 5,
            target: 2,
            approach_tilt_deg: 20.0,
            entry_height: 150.0,
            steps_between_views: 30,
            dt: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemoRun {
    pub run: usize,
    /// Triangulation residual, mm.
    pub residual: f64,
    /// Triangulated target against the truth, mm.
    pub target_error: f64,
    /// Wire tip against the truth, mm.
    pub tip_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemoReport {
    pub target: String,
    pub runs: Vec<DemoRun>,
    pub tip_error: (f64, f64),
    pub acquisitions: usize,
    pub reference_acquisitions: (usize, usize),
    pub reference_time_s: (f64, f64),
}

pub fn run_demo_twoview(
    cfg: &ExperimentConfig,
    op: &crate::simulator::VirtualOperator,
) -> Result<DemoReport, SimulatorError> {
    cfg.validate()?;
    op.validate()?;
    let s = &cfg.demo;
    let rig = Rig::new(cfg.scene.clone())?;
    let Some(bead) = rig.phantom.beads.get(s.target) else {
        return Err(SimulatorError::Config(format!("no bead with index {}", s.target)));
    };
    if s.runs == 0 || !(s.dt > 0.0) {
        return Err(SimulatorError::Config("demo needs runs ≥ 1 and dt > 0".into()));
    }
    let observer = Observer::new(&rig, cfg.imaging)?;
    let gantry = [0.0, rig.config.xray.second_view_deg];
    let views = ["view1", "view2"];
    let lab_to_hmd = rig.lab_to_hmd(&rig.config.hmd.placement);
    let clean = gantry
        .iter()
        .map(|g| {
            Ok((
                observer.xray_corners(*g, &rig.marker)?,
                observer.rgb_corners(&lab_to_hmd, &rig.marker)?,
            ))
        })
        .collect::<Result<Vec<_>, SimulatorError>>()?;
    // lock 1, lock 2, then the wire placement
    let trajectory = Trajectory::stationary(rig.w_to_hmd(&lab_to_hmd), s.dt, 2 * s.steps_between_views);
    let times = [0.0, s.steps_between_views as f64 * s.dt, trajectory.end_time()];
    let hmd_to_lab = lab_to_hmd.inverse();
    let tilt = s.approach_tilt_deg.to_radians();
    let approach = Vector3::new(tilt.sin(), 0.0, -tilt.cos());

    let runs = (0..s.runs)
        .into_par_iter()
        .map(|run| {
            let trial = run as u64;
            let (mut xr, mut rr) = (
                rng_for(cfg.seed, trial, stream::XRAY),
                rng_for(cfg.seed, trial, stream::RGB),
            );
            let mut ar = rng_for(cfg.seed, trial, stream::ANNOTATION);
            let mut or = rng_for(cfg.seed ^ op.seed, trial, stream::OPERATOR);
            let slam = SlamConfig {
                sigma_translation: cfg.noise.slam_translation_mm,
                sigma_rotation: cfg.noise.slam_rotation_deg,
                seed: rng_for(cfg.seed, trial, stream::SLAM).random(),
                ..SlamConfig::default()
            };
            let tracker = SlamSimulator::new(&slam, trajectory.clone())?;
            let mut calibrated = BTreeMap::new();
            let mut annotations = Vec::new();
            for v in 0..2 {
                let rec = noisy_lock(
                    &observer,
                    views[v],
                    times[v],
                    &clean[v],
                    &tracker.pose(times[v])?,
                    &cfg.noise,
                    &mut xr,
                    &mut rr,
                )?;
                calibrated.insert(views[v].to_string(), (rec, observer.xray));
                let px = annotate(&rig, gantry[v], &bead.position, cfg.noise.annotation_px, &mut ar)?;
                annotations.push(Annotation::point(views[v], px, 1));
            }
            let geometry = build_geometry(&annotations, &calibrated)?;
            let point = geometry.points[0];
            let shown: RigidTransform = hmd_to_lab.compose(&tracker.pose(times[2])?);
            let target = shown.apply_point(&point.position);
            let guide = Ray3::new(target - approach * 100.0, approach).expect("unit approach");
            let wire = op.place_wire(
                &guide,
                (&Vector3::new(0.0, 0.0, s.entry_height), &Vector3::z()),
                &mut or,
            );
            // advance until the tip reaches the target's depth along the wire
            let tip = wire.at((target - wire.origin).dot(&wire.direction));
            Ok(DemoRun {
                run,
                residual: point.residual,
                target_error: (rig.lab_to_w.inverse().apply_point(&point.position) - bead.position).norm(),
                tip_error: (tip - bead.position).norm(),
            })
        })
        .collect::<Result<Vec<_>, SimulatorError>>()?;
    let tips: Vec<f64> = runs.iter().map(|r| r.tip_error).collect();
    Ok(DemoReport {
        target: bead.label.clone(),
        tip_error: aggregate(&tips),
        runs,
        acquisitions: DEMO_ACQUISITIONS,
        reference_acquisitions: (5, 16),
        reference_time_s: (168.0, 186.0),
    })
}

impl ExperimentReport for DemoReport {
    fn trials(&self) -> Table {
        let mut t = Table::new(&["run", "residual_mm", "target_error_mm", "tip_error_mm"]);
        for r in &self.runs {
            t.push(vec![
                r.run.to_string(),
                num(r.residual),
                num(r.target_error),
                num(r.tip_error),
            ]);
        }
        t
    }

    fn summary_text(&self) -> String {
        let header = ["".to_string(), "simulated".into(), super::REFERENCE_LABEL.into()];
        let rows = vec![
            vec![
                format!("tip error, target {} (mm)", self.target),
                tuple(self.tip_error),
                "".into(),
            ],
            vec![
                "X-ray acquisitions (guided / conventional)".to_string(),
                self.acquisitions.to_string(),
                format!(
                    "{} / {}",
                    self.reference_acquisitions.0, self.reference_acquisitions.1
                ),
            ],
            vec![
                "procedure time, s (guided / conventional)".to_string(),
                "not simulated".into(),
                format!("{} / {}", self.reference_time_s.0, self.reference_time_s.1),
            ],
        ];
        format!(
            "Two-view targeting demo, {} runs\n{}",
            self.runs.len(),
            render_table(&header, &rows)
        )
    }
}
