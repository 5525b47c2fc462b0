//! Single-view guidance: one lock, one annotation per bead, and a virtual
//! operator who follows each displayed line with a wire several times. The
//! puncture is where the wire meets the bead's plateau.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    annotate, noisy_lock, num, render_table, rng_for, stream, tuple, ExperimentConfig, ExperimentReport,
    Observer, Table,
};
use crate::geometry::{Ray3, RigidTransform};
use crate::guidance::{annotation_to_ray, Annotation};
use crate::simulator::{MetricSummary, Rig, SimulatorError};
use crate::tracking::{SlamConfig, SlamSimulator, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceSettings {
    pub attempts_per_bead: usize,
    /// Height of the gel surface where the wire enters, lab `z`, mm.
    pub entry_height: f64,
    /// Systematic world-frame offset added to the calibration, mm.
    pub system_bias_mm: [f64; 3],
    /// Tracking steps between attempts.
    pub steps_per_attempt: usize,
    pub dt: f64,
    pub gantry_deg: f64,
}

impl Default for GuidanceSettings {
    fn default() -> Self {
        Self {
            attempts_per_bead: 5,
            entry_height: 150.0,
            system_bias_mm: [0.0; 3],
            steps_per_attempt: 10,
            dt: 0.1,
            gantry_deg: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GuidanceAttempt {
    /// Attempt index in the clockwise order.
    pub attempt: usize,
    pub bead: String,
    /// Puncture point, lab frame, mm.
    pub puncture: [f64; 3],
    pub to_target: f64,
    pub to_centroid: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GuidanceReport {
    pub attempts: Vec<GuidanceAttempt>,
    /// Distance to the bead (accuracy).
    pub accuracy: MetricSummary,
    /// Distance to the puncture centroid (precision).
    pub precision: MetricSummary,
    pub reference_accuracy_mm: (f64, f64),
    pub reference_precision_mm: (f64, f64),
}

pub fn run_experiment_guidance(
    cfg: &ExperimentConfig,
    op: &crate::simulator::VirtualOperator,
) -> Result<GuidanceReport, SimulatorError> {
    cfg.validate()?;
    op.validate()?;
    let s = &cfg.guidance;
    if s.attempts_per_bead == 0 || !(s.dt > 0.0) {
        return Err(SimulatorError::Config(
            "guidance needs attempts ≥ 1 and dt > 0".into(),
        ));
    }
    let rig = Rig::new(cfg.scene.clone())?;
    let observer = Observer::new(&rig, cfg.imaging)?;
    let lab_to_hmd = rig.lab_to_hmd(&rig.config.hmd.placement);
    let clean = (
        observer.xray_corners(s.gantry_deg, &rig.marker)?,
        observer.rgb_corners(&lab_to_hmd, &rig.marker)?,
    );
    let beads = &rig.phantom.beads;
    let total = beads.len() * s.attempts_per_bead;
    let trajectory =
        Trajectory::stationary(rig.w_to_hmd(&lab_to_hmd), s.dt, (total + 1) * s.steps_per_attempt);

    let (mut xr, mut rr) = (
        rng_for(cfg.seed, 0, stream::XRAY),
        rng_for(cfg.seed, 0, stream::RGB),
    );
    let mut ar = rng_for(cfg.seed, 0, stream::ANNOTATION);
    let mut or = rng_for(cfg.seed ^ op.seed, 0, stream::OPERATOR);
    let slam = SlamConfig {
        sigma_translation: cfg.noise.slam_translation_mm,
        sigma_rotation: cfg.noise.slam_rotation_deg,
        seed: rng_for(cfg.seed, 0, stream::SLAM).random(),
        ..SlamConfig::default()
    };
    let tracker = SlamSimulator::new(&slam, trajectory)?;

    let mut rec = noisy_lock(
        &observer,
        "view1",
        0.0,
        &clean,
        &tracker.pose(0.0)?,
        &cfg.noise,
        &mut xr,
        &mut rr,
    )?;
    let [bx, by, bz] = s.system_bias_mm;
    rec.c_to_w = RigidTransform::translate(bx, by, bz).compose(&rec.c_to_w);
    let rays: Vec<Ray3> = beads
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let px = annotate(&rig, s.gantry_deg, &b.position, cfg.noise.annotation_px, &mut ar)?;
            Ok(annotation_to_ray(
                &Annotation::point("view1", px, i as u32 + 1),
                &rec,
                &observer.xray,
            )?)
        })
        .collect::<Result<_, SimulatorError>>()?;

    let entry_point = Vector3::new(0.0, 0.0, s.entry_height);
    let hmd_to_lab = lab_to_hmd.inverse();
    let mut punctures = vec![Vec::new(); beads.len()];
    let mut attempts = Vec::with_capacity(total);
    for j in 0..total {
        let b = j % beads.len();
        let t = ((j + 1) * s.steps_per_attempt) as f64 * s.dt;
        // the world-anchored line as the HMD displays it in the room
        let shown = rays[b].transformed(&hmd_to_lab.compose(&tracker.pose(t)?));
        let wire = op.place_wire(&shown, (&entry_point, &Vector3::z()), &mut or);
        let (n, d) = rig.phantom.plateau_plane(b);
        let denom = n.dot(&wire.direction);
        if denom.abs() < 1e-12 {
            return Err(SimulatorError::Failed("wire parallel to the plateau".into()));
        }
        let p = wire.at((d - n.dot(&wire.origin)) / denom);
        punctures[b].push(p);
        attempts.push((j, b, p));
    }
    let centroids: Vec<Vector3<f64>> = punctures
        .iter()
        .map(|ps| ps.iter().sum::<Vector3<f64>>() / ps.len() as f64)
        .collect();
    let mut acc = vec![Vec::new(); beads.len()];
    let mut prec = vec![Vec::new(); beads.len()];
    let attempts = attempts
        .into_iter()
        .map(|(j, b, p)| {
            let to_target = (p - beads[b].position).norm();
            let to_centroid = (p - centroids[b]).norm();
            acc[b].push(to_target);
            prec[b].push(to_centroid);
            GuidanceAttempt {
                attempt: j,
                bead: beads[b].label.clone(),
                puncture: p.into(),
                to_target,
                to_centroid,
            }
        })
        .collect();
    let labels: Vec<String> = beads.iter().map(|b| b.label.clone()).collect();
    Ok(GuidanceReport {
        attempts,
        accuracy: MetricSummary::from_groups(labels.clone(), &acc),
        precision: MetricSummary::from_groups(labels, &prec),
        reference_accuracy_mm: (9.84, 3.97),
        reference_precision_mm: (4.47, 2.91),
    })
}

impl ExperimentReport for GuidanceReport {
    fn trials(&self) -> Table {
        let mut t = Table::new(&[
            "attempt",
            "bead",
            "x_mm",
            "y_mm",
            "z_mm",
            "to_target_mm",
            "to_centroid_mm",
        ]);
        for a in &self.attempts {
            let [x, y, z] = a.puncture;
            t.push(vec![
                a.attempt.to_string(),
                a.bead.clone(),
                num(x),
                num(y),
                num(z),
                num(a.to_target),
                num(a.to_centroid),
            ]);
        }
        t
    }

    fn summary_text(&self) -> String {
        let mut header = vec!["distance to (mm)".to_string()];
        header.extend(self.accuracy.labels.iter().map(|l| format!("target {l}")));
        header.push("overall".into());
        header.push(super::REFERENCE_LABEL.into());
        let row = |name: &str, m: &MetricSummary, reference: (f64, f64)| {
            let mut r = vec![name.to_string()];
            r.extend((0..m.labels.len()).map(|i| m.tuple(i)));
            r.push(m.overall_tuple());
            r.push(tuple(reference));
            r
        };
        let rows = vec![
            row("Target", &self.accuracy, self.reference_accuracy_mm),
            row("Centroid", &self.precision, self.reference_precision_mm),
        ];
        format!(
            "Guidance with a simulated operator, {} punctures\n{}",
            self.attempts.len(),
            render_table(&header, &rows)
        )
    }
}
