//! Ground truth ⊕ random-walk drift stand-in for the HMD's world tracking.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TrackingError;
use crate::geometry::RigidTransform;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlamConfig {
    /// Translation noise per step and axis, mm.
    pub sigma_translation: f64,
    /// Rotation noise magnitude per step, degrees.
    pub sigma_rotation: f64,
    /// Size of a one-off relocalization jump, mm.
    pub relocalization_jump: Option<f64>,
    /// Step at which the jump happens (default: the middle of the trajectory).
    pub relocalization_step: Option<usize>,
    pub seed: u64,
}

impl Default for SlamConfig {
    fn default() -> Self {
        Self {
            sigma_translation: 0.0,
            sigma_rotation: 0.0,
            relocalization_jump: None,
            relocalization_step: None,
            seed: 0,
        }
    }
}

impl SlamConfig {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), TrackingError> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !ok(self.sigma_translation) || !ok(self.sigma_rotation) || !self.relocalization_jump.is_none_or(ok)
        {
            return Err(TrackingError::InvalidConfig(
                "SLAM sigmas and jump must be finite and ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

/// Ground-truth world-to-HMD poses sampled every `dt` seconds from t = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub poses: Vec<RigidTransform>,
}

impl Trajectory {
    pub fn new(dt: f64, poses: Vec<RigidTransform>) -> Result<Self, TrackingError> {
        if !(dt > 0.0) || !dt.is_finite() || poses.is_empty() {
            return Err(TrackingError::InvalidConfig(
                "trajectory needs dt > 0 and at least one pose".into(),
            ));
        }
        Ok(Self { dt, poses })
    }

    /// A motionless HMD at `w_to_hmd` for `steps` steps.
    pub fn stationary(w_to_hmd: RigidTransform, dt: f64, steps: usize) -> Self {
        Self {
            dt,
            poses: vec![w_to_hmd; steps + 1],
        }
    }

    pub fn end_time(&self) -> f64 {
        self.dt * (self.poses.len() - 1) as f64
    }

    /// Index of the sample in effect at `t` (the tracker holds its last pose
    /// between samples).
    pub fn step_at(&self, t: f64) -> Result<usize, TrackingError> {
        let end = self.end_time();
        if !(t >= 0.0 && t <= end * (1.0 + 1e-12)) {
            return Err(TrackingError::OutOfRange { t, end });
        }
        let k = (t / self.dt + 1e-9).floor() as usize;
        Ok(k.min(self.poses.len() - 1))
    }
}

/// Deterministic drifting tracker. The drift `D_k` is expressed in the world
/// frame and applied as `w_to_hmd_est = w_to_hmd ∘ D_k`.
#[derive(Clone, Debug)]
pub struct SlamSimulator {
    trajectory: Trajectory,
    drift: Vec<RigidTransform>,
}

impl SlamSimulator {
    pub fn new(config: &SlamConfig, trajectory: Trajectory) -> Result<Self, TrackingError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let n = trajectory.poses.len();
        let t_noise = Normal::new(0.0, config.sigma_translation).expect("validated sigma");
        let r_noise = Normal::new(0.0, config.sigma_rotation.to_radians()).expect("validated sigma");
        let jump_step = config.relocalization_step.unwrap_or(n / 2);

        let mut drift = Vec::with_capacity(n);
        let mut d = RigidTransform::identity();
        drift.push(d);
        for k in 1..n {
            let v = Vector3::from_fn(|_, _| t_noise.sample(&mut rng));
            let angle = r_noise.sample(&mut rng).abs();
            let axis = random_unit(&mut rng);
            let mut step = RigidTransform::from_parts(
                nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle),
                v,
            );
            if k == jump_step {
                if let Some(jump) = config.relocalization_jump {
                    let dir = random_unit(&mut rng);
                    step = RigidTransform::from_translation(dir * jump).compose(&step);
                }
            }
            d = step.compose(&d);
            drift.push(d);
        }
        Ok(Self { trajectory, drift })
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    /// Accumulated drift at step `k`.
    pub fn drift(&self, k: usize) -> &RigidTransform {
        &self.drift[k.min(self.drift.len() - 1)]
    }

    /// Estimated world-to-HMD transform at time `t`.
    pub fn pose(&self, t: f64) -> Result<RigidTransform, TrackingError> {
        let k = self.trajectory.step_at(t)?;
        Ok(self.trajectory.poses[k].compose(&self.drift[k]))
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::<f64>::from_fn(|_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// One-shot query; builds the drift sequence from the seed each call.
pub fn slam_pose(
    config: &SlamConfig,
    ground_truth: &Trajectory,
    t: f64,
) -> Result<RigidTransform, TrackingError> {
    SlamSimulator::new(config, ground_truth.clone())?.pose(t)
}
