//! Two-view landmark precision: each run re-locks both gantry positions,
//! annotates the four beads in both images and triangulates them. The spread
//! of each bead over the runs, in 3-D and projected onto the first view's
//! detector plane, gives the two landmark tables.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    annotate, noisy_lock, num, render_table, rng_for, stream, tuple, ExperimentConfig, ExperimentReport,
    Observer, Table,
};
use crate::guidance::{build_geometry, Annotation};
use crate::simulator::{rms, MetricSummary, Rig, SimulatorError};
use crate::tracking::{SlamConfig, SlamSimulator, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandmarkSettings {
    pub runs: usize,
    /// Tracking steps between the two acquisitions of a run.
    pub steps_between_views: usize,
    pub dt: f64,
}

impl Default for LandmarkSettings {
    fn default() -> Self {
        Self {
            runs: 5,
            steps_between_views: 30,
            dt: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LandmarkEstimate {
    pub run: usize,
    pub bead: String,
    /// Triangulated world position, mm.
    pub position: [f64; 3],
    /// Distance to the bead's centroid over all runs, mm.
    pub distance: f64,
    /// The same deviation with its component along the first view's optical
    /// axis removed, mm.
    pub in_plane: f64,
    /// That removed component, mm (absolute value).
    pub out_of_plane: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LandmarkReport {
    pub estimates: Vec<LandmarkEstimate>,
    pub runs: usize,
    pub distance: MetricSummary,
    pub in_plane: MetricSummary,
    /// RMS of the out-of-plane and in-plane deviation components, mm.
    pub out_of_plane_rms: f64,
    pub in_plane_rms: f64,
    /// Fraction of single triangulations whose out-of-plane deviation
    /// exceeds the in-plane one.
    pub out_of_plane_fraction: f64,
}

impl LandmarkReport {
    /// Out-of-plane error dominates the run-to-run spread.
    pub fn out_of_plane_dominates(&self) -> bool {
        self.out_of_plane_rms > self.in_plane_rms
    }

    /// Distance to ground truth of every triangulated bead, mm.
    pub fn max_error_to(&self, truth: &BTreeMap<String, Vector3<f64>>) -> f64 {
        self.estimates
            .iter()
            .map(|e| (Vector3::from(e.position) - truth[&e.bead]).norm())
            .fold(0.0, f64::max)
    }
}

pub fn run_experiment_landmarks(cfg: &ExperimentConfig) -> Result<LandmarkReport, SimulatorError> {
    cfg.validate()?;
    let s = &cfg.landmarks;
    if s.runs == 0 || !(s.dt > 0.0) {
        return Err(SimulatorError::Config(
            "landmarks needs runs ≥ 1 and dt > 0".into(),
        ));
    }
    let rig = Rig::new(cfg.scene.clone())?;
    let observer = Observer::new(&rig, cfg.imaging)?;
    let gantry = [0.0, rig.config.xray.second_view_deg];
    let views = ["view1", "view2"];
    let lab_to_hmd = rig.lab_to_hmd(&rig.config.hmd.placement);
    let clean = gantry
        .par_iter()
        .map(|g| {
            Ok((
                observer.xray_corners(*g, &rig.marker)?,
                observer.rgb_corners(&lab_to_hmd, &rig.marker)?,
            ))
        })
        .collect::<Result<Vec<_>, SimulatorError>>()?;
    let trajectory = Trajectory::stationary(rig.w_to_hmd(&lab_to_hmd), s.dt, s.steps_between_views);
    let times = [0.0, trajectory.end_time()];
    let beads = &rig.phantom.beads;

    let runs = (0..s.runs)
        .into_par_iter()
        .map(|run| {
            let trial = run as u64;
            let (mut xr, mut rr) = (
                rng_for(cfg.seed, trial, stream::XRAY),
                rng_for(cfg.seed, trial, stream::RGB),
            );
            let mut ar = rng_for(cfg.seed, trial, stream::ANNOTATION);
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
                for (i, b) in beads.iter().enumerate() {
                    let px = annotate(&rig, gantry[v], &b.position, cfg.noise.annotation_px, &mut ar)?;
                    annotations.push(Annotation::point(views[v], px, i as u32 + 1));
                }
            }
            let geometry = build_geometry(&annotations, &calibrated)?;
            let mut points = vec![Vector3::zeros(); beads.len()];
            for p in &geometry.points {
                points[p.color as usize - 1] = p.position;
            }
            Ok(points)
        })
        .collect::<Result<Vec<_>, SimulatorError>>()?;

    let axis = rig.c_to_w(gantry[0]).apply_vector(&Vector3::z());
    let mut estimates = Vec::new();
    let (mut dist, mut inplane) = (vec![Vec::new(); beads.len()], vec![Vec::new(); beads.len()]);
    let (mut outs, mut ins) = (Vec::new(), Vec::new());
    for (i, bead) in beads.iter().enumerate() {
        let centroid = runs.iter().map(|r| r[i]).sum::<Vector3<f64>>() / s.runs as f64;
        for (run, r) in runs.iter().enumerate() {
            let d = r[i] - centroid;
            let out = d.dot(&axis);
            let lateral = (d - axis * out).norm();
            dist[i].push(d.norm());
            inplane[i].push(lateral);
            outs.push(out.abs());
            ins.push(lateral);
            estimates.push(LandmarkEstimate {
                run,
                bead: bead.label.clone(),
                position: r[i].into(),
                distance: d.norm(),
                in_plane: lateral,
                out_of_plane: out.abs(),
            });
        }
    }
    estimates.sort_by_key(|e| e.run);
    let labels: Vec<String> = beads.iter().map(|b| b.label.clone()).collect();
    let dominated = outs.iter().zip(&ins).filter(|(o, i)| o > i).count();
    Ok(LandmarkReport {
        runs: s.runs,
        distance: MetricSummary::from_groups(labels.clone(), &dist),
        in_plane: MetricSummary::from_groups(labels, &inplane),
        out_of_plane_rms: rms(&outs),
        in_plane_rms: rms(&ins),
        out_of_plane_fraction: dominated as f64 / outs.len() as f64,
        estimates,
    })
}

/// Reference rows from the physical system: 3-D and in-plane `(mean, std)` per target.
const REFERENCE_3D: [(f64, f64); 4] = [(9.49, 6.31), (8.76, 3.44), (9.18, 5.53), (11.7, 7.93)];
const REFERENCE_IN_PLANE: [(f64, f64); 4] = [(3.21, 1.79), (3.67, 2.17), (3.96, 0.70), (4.03, 1.89)];

impl LandmarkReport {
    fn table(
        &self,
        title: &str,
        row_prefix: &str,
        m: &MetricSummary,
        pick: fn(&LandmarkEstimate) -> f64,
    ) -> String {
        let reference = if row_prefix == "Target" {
            REFERENCE_3D
        } else {
            REFERENCE_IN_PLANE
        };
        let mut header = vec!["".to_string()];
        header.extend((1..=self.runs).map(|r| format!("run {r} (mm)")));
        header.push("Average (mm)".into());
        header.push(super::REFERENCE_LABEL.into());
        let rows: Vec<Vec<String>> = m
            .labels
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let mut row = vec![format!("{row_prefix} {label}")];
                row.extend(
                    self.estimates
                        .iter()
                        .filter(|e| &e.bead == label)
                        .map(|e| crate::textfmt::sig3(pick(e))),
                );
                row.push(m.tuple(i));
                row.push(reference.get(i).map(|r| tuple(*r)).unwrap_or_default());
                row
            })
            .collect();
        format!(
            "{title}\n{}overall {}\n",
            render_table(&header, &rows),
            m.overall_tuple()
        )
    }
}

impl ExperimentReport for LandmarkReport {
    fn trials(&self) -> Table {
        let mut t = Table::new(&[
            "run",
            "bead",
            "x_mm",
            "y_mm",
            "z_mm",
            "distance_mm",
            "in_plane_mm",
            "out_of_plane_mm",
        ]);
        for e in &self.estimates {
            let [x, y, z] = e.position;
            t.push(vec![
                e.run.to_string(),
                e.bead.clone(),
                num(x),
                num(y),
                num(z),
                num(e.distance),
                num(e.in_plane),
                num(e.out_of_plane),
            ]);
        }
        t
    }

    fn summary_text(&self) -> String {
        let mut out = self.table(
            "Deviation of triangulated landmarks from their centroid",
            "Target",
            &self.distance,
            |e| e.distance,
        );
        out += "\n";
        out += &self.table(
            "Deviation projected onto the first view's detector plane",
            "Centroid",
            &self.in_plane,
            |e| e.in_plane,
        );
        out += &format!(
            "\nout-of-plane RMS {:.2} mm, in-plane RMS {:.2} mm, out-of-plane larger in {:.0}% of triangulations\n",
            self.out_of_plane_rms,
            self.in_plane_rms,
            100.0 * self.out_of_plane_fraction
        );
        out
    }
}
