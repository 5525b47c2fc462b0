//! The simulated surgeon who follows a displayed guidance line with a wire.

use nalgebra::{Unit, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimulatorError;
use crate::geometry::{Ray3, RigidTransform};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VirtualOperator {
    /// Angular aiming error (per tilt axis), degrees.
    pub aim_sigma_deg: f64,
    /// Lateral error of the entry point (per axis), mm.
    pub entry_offset_sigma_mm: f64,
    pub seed: u64,
}

impl Default for VirtualOperator {
    fn default() -> Self {
        Self {
            aim_sigma_deg: 1.0,
            entry_offset_sigma_mm: 2.0,
            seed: 0,
        }
    }
}

impl VirtualOperator {
    pub fn perfect() -> Self {
        Self {
            aim_sigma_deg: 0.0,
            entry_offset_sigma_mm: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SimulatorError> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !ok(self.aim_sigma_deg) || !ok(self.entry_offset_sigma_mm) {
            return Err(SimulatorError::Config(
                "operator sigmas must be finite and ≥ 0".into(),
            ));
        }
        Ok(())
    }

    /// Places a wire along `guide`: the entry point is where the guide
    /// crosses `entry` (a point on the skin plane with its normal), moved
    /// sideways by the entry noise; the direction is the guide's tilted by
    /// the aiming noise.
    pub fn place_wire<R: Rng>(
        &self,
        guide: &Ray3,
        entry: (&Vector3<f64>, &Vector3<f64>),
        rng: &mut R,
    ) -> Ray3 {
        let (p0, n) = entry;
        let d = guide.direction.into_inner();
        let s = n.dot(&(p0 - guide.origin)) / n.dot(&d);
        let hit = guide.at(s);
        let (e1, e2) = perpendicular_basis(&d);
        let off = Normal::new(0.0, self.entry_offset_sigma_mm).expect("validated");
        let aim = Normal::new(0.0, self.aim_sigma_deg.to_radians()).expect("validated");
        let start = hit + e1 * off.sample(rng) + e2 * off.sample(rng);
        let tilt = e1 * aim.sample(rng) + e2 * aim.sample(rng);
        let dir = RigidTransform::exp_rotation(&tilt).apply_vector(&d);
        Ray3 {
            origin: start,
            direction: Unit::new_normalize(dir),
        }
    }
}

pub(crate) fn perpendicular_basis(d: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if d.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = d.cross(&helper).normalize();
    let e2 = d.cross(&e1).normalize();
    (e1, e2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_operator_follows_the_guide() {
        let guide = Ray3::new(Vector3::new(0.0, 0.0, 900.0), Vector3::new(0.1, 0.0, -1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let wire = VirtualOperator::perfect().place_wire(
            &guide,
            (&Vector3::new(0.0, 0.0, 150.0), &Vector3::z()),
            &mut rng,
        );
        assert!((wire.origin.z - 150.0).abs() < 1e-12);
        assert!(guide.distance_to_point(&wire.origin) < 1e-12);
        assert!((wire.direction.into_inner() - guide.direction.into_inner()).norm() < 1e-15);
    }

    #[test]
    fn noisy_wire_statistics() {
        let op = VirtualOperator {
            aim_sigma_deg: 2.0,
            entry_offset_sigma_mm: 3.0,
            seed: 0,
        };
        let guide = Ray3::new(Vector3::new(0.0, 0.0, 900.0), Vector3::new(0.0, 0.0, -1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4000;
        let (mut off2, mut ang2) = (0.0, 0.0);
        for _ in 0..n {
            let w = op.place_wire(&guide, (&Vector3::new(0.0, 0.0, 150.0), &Vector3::z()), &mut rng);
            off2 += w.origin.xy().norm_squared();
            ang2 += w.direction.angle(&guide.direction).powi(2);
        }
        // two independent axes each
        assert!(((off2 / n as f64).sqrt() - 3.0 * 2f64.sqrt()).abs() < 0.2);
        assert!(((ang2 / n as f64).sqrt().to_degrees() - 2.0 * 2f64.sqrt()).abs() < 0.15);
    }
}
