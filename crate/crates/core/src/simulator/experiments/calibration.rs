//! Calibration reproducibility: C-arm and HMD stay put while the marker is
//! moved around; every placement yields an estimate of the C-arm pose in the
//! HMD frame, and the spread of those estimates measures the calibration.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    jitter, num, render_table, rng_for, stream, tuple, ExperimentConfig, ExperimentReport, Observer, Table,
};
use crate::geometry::{chordal_mean, geodesic_angle, RigidTransform};
use crate::simulator::{aggregate, marker_displacement, Rig, SimulatorError, DEFAULT_MARKER_DISPLACEMENTS};
use crate::tracking::calibrate_from_observations;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    /// Independent repetitions of the whole displacement sequence.
    pub repetitions: usize,
    /// Marker displacements `[x mm, y mm, rotation deg]` in the marker frame.
    pub displacements: Vec<[f64; 3]>,
    /// Also measure the undisplaced marker (the `t0` measurement).
    pub include_reference: bool,
    /// Gantry angle of the fixed C-arm, degrees.
    pub gantry_deg: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            repetitions: 6,
            displacements: DEFAULT_MARKER_DISPLACEMENTS.to_vec(),
            include_reference: true,
            gantry_deg: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationMeasurement {
    pub repetition: usize,
    /// 0 is the reference placement, `i` the `i`-th displacement.
    pub placement: usize,
    /// Estimated C-arm origin in the HMD frame, mm.
    pub c_origin_hmd: [f64; 3],
    /// Distance to the repetition's centroid, mm.
    pub position_error: f64,
    /// Angle to the repetition's mean rotation, degrees.
    pub rotation_error_deg: f64,
    /// The full estimate, `C → HMD`.
    #[serde(skip)]
    pub c_to_hmd: RigidTransform,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub measurements: Vec<CalibrationMeasurement>,
    pub position_mm: (f64, f64),
    pub rotation_deg: (f64, f64),
    pub reference_position_mm: (f64, f64),
    pub reference_rotation_deg: (f64, f64),
}

pub fn run_experiment_calibration(cfg: &ExperimentConfig) -> Result<CalibrationReport, SimulatorError> {
    cfg.validate()?;
    let s = &cfg.calibration;
    if s.repetitions == 0 {
        return Err(SimulatorError::Config(
            "calibration needs at least one repetition".into(),
        ));
    }
    let rig = Rig::new(cfg.scene.clone())?;
    let observer = Observer::new(&rig, cfg.imaging)?;
    let cams = observer.lock_cameras();
    let lab_to_hmd = rig.lab_to_hmd(&rig.config.hmd.placement);
    let w_to_hmd = rig.w_to_hmd(&lab_to_hmd);

    let mut placements = Vec::new();
    if s.include_reference {
        placements.push((0, RigidTransform::identity()));
    }
    placements.extend(
        s.displacements
            .iter()
            .enumerate()
            .map(|(i, d)| (i + 1, marker_displacement(d))),
    );
    if placements.len() < 2 {
        return Err(SimulatorError::Config(
            "calibration needs at least two marker placements".into(),
        ));
    }
    // noiseless observations, shared by all repetitions
    let clean = placements
        .par_iter()
        .map(|(_, d)| {
            let marker = rig.displaced_marker(d);
            Ok((
                observer.xray_corners(s.gantry_deg, &marker)?,
                observer.rgb_corners(&lab_to_hmd, &marker)?,
            ))
        })
        .collect::<Result<Vec<_>, SimulatorError>>()?;

    let model = rig.marker.model;
    let reps = (0..s.repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut xr = rng_for(cfg.seed, rep as u64, stream::XRAY);
            let mut rr = rng_for(cfg.seed, rep as u64, stream::RGB);
            let estimates = clean
                .iter()
                .map(|(x, r)| {
                    let x = jitter(x, cfg.noise.xray_corner_px, &mut xr);
                    let r = jitter(r, cfg.noise.rgb_corner_px, &mut rr);
                    let rec = calibrate_from_observations("calib", 0.0, &x, &r, &cams, &w_to_hmd, &model)?;
                    Ok(rec.hmd_to_m.inverse().compose(&rec.c_to_m))
                })
                .collect::<Result<Vec<_>, SimulatorError>>()?;
            Ok(spread(rep, &placements, estimates))
        })
        .collect::<Result<Vec<_>, SimulatorError>>()?;

    let measurements: Vec<_> = reps.into_iter().flatten().collect();
    let pos: Vec<f64> = measurements.iter().map(|m| m.position_error).collect();
    let rot: Vec<f64> = measurements.iter().map(|m| m.rotation_error_deg).collect();
    Ok(CalibrationReport {
        position_mm: aggregate(&pos),
        rotation_deg: aggregate(&rot),
        measurements,
        reference_position_mm: (21.4, 11.4),
        reference_rotation_deg: (0.9, 0.4),
    })
}

fn spread(
    rep: usize,
    placements: &[(usize, RigidTransform)],
    estimates: Vec<RigidTransform>,
) -> Vec<CalibrationMeasurement> {
    let origins: Vec<Vector3<f64>> = estimates.iter().map(|x| *x.translation()).collect();
    let centroid = origins.iter().sum::<Vector3<f64>>() / origins.len() as f64;
    let rotations: Vec<Matrix3<f64>> = estimates.iter().map(|x| *x.rotation()).collect();
    let mean = chordal_mean(&rotations).unwrap_or_else(|| rotations[0]);
    estimates
        .into_iter()
        .zip(placements)
        .map(|(x, (placement, _))| CalibrationMeasurement {
            repetition: rep,
            placement: *placement,
            c_origin_hmd: (*x.translation()).into(),
            position_error: (x.translation() - centroid).norm(),
            rotation_error_deg: geodesic_angle(x.rotation(), &mean).to_degrees(),
            c_to_hmd: x,
        })
        .collect()
}

impl ExperimentReport for CalibrationReport {
    fn trials(&self) -> Table {
        let mut t = Table::new(&[
            "repetition",
            "placement",
            "c_x_mm",
            "c_y_mm",
            "c_z_mm",
            "position_error_mm",
            "rotation_error_deg",
        ]);
        for m in &self.measurements {
            let [x, y, z] = m.c_origin_hmd;
            t.push(vec![
                m.repetition.to_string(),
                m.placement.to_string(),
                num(x),
                num(y),
                num(z),
                num(m.position_error),
                num(m.rotation_error_deg),
            ]);
        }
        t
    }

    fn summary_text(&self) -> String {
        let header = ["".to_string(), "simulated".into(), super::REFERENCE_LABEL.into()];
        let rows = vec![
            vec![
                "positional error (mm)".to_string(),
                tuple(self.position_mm),
                tuple(self.reference_position_mm),
            ],
            vec![
                "rotational error (deg)".to_string(),
                tuple(self.rotation_deg),
                tuple(self.reference_rotation_deg),
            ],
        ];
        format!(
            "Calibration reproducibility over {} measurements\n{}",
            self.measurements.len(),
            render_table(&header, &rows)
        )
    }
}
