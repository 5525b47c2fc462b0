use std::fmt;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

/// Orthonormality drift above which rotations are projected back onto SO(3).
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// A rigid motion `p ↦ R·p + t`, translation in millimeters.
///
/// A value named `a_to_b` maps coordinates expressed in frame `a` into frame
/// `b`. Composition is right to left: `a_to_c = b_to_c.compose(&a_to_b)`.
#[derive(Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl fmt::Debug for RigidTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RigidTransform")
            .field("rotation", &self.rotation.as_slice())
            .field("translation", &self.translation.as_slice())
            .finish()
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, projecting `rotation` onto SO(3) when it is off by
    /// more than [`ORTHONORMAL_TOLERANCE`].
    ///
    /// Returns `None` for non-finite input or a reflection (det < 0).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Option<Self> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return None;
        }
        let rotation = if orthonormality_error(&rotation) > ORTHONORMAL_TOLERANCE
            || (rotation.determinant() - 1.0).abs() > ORTHONORMAL_TOLERANCE
        {
            project_to_so3(&rotation)?
        } else {
            rotation
        };
        Some(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Rotation3<f64>) -> Self {
        Self {
            rotation: *rotation.matrix(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_parts(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    pub fn translate(x: f64, y: f64, z: f64) -> Self {
        Self::from_translation(Vector3::new(x, y, z))
    }

    /// Rotation about an axis through the origin; angle in radians.
    pub fn from_axis_angle(axis: &Unit<Vector3<f64>>, angle: f64) -> Self {
        Self::from_rotation(Rotation3::from_axis_angle(axis, angle))
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::x_axis(), angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::y_axis(), angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::z_axis(), angle)
    }

    /// Rotation by the rotation vector `omega` (axis × angle, radians).
    pub fn exp_rotation(omega: &Vector3<f64>) -> Self {
        Self::from_rotation(Rotation3::new(*omega))
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation3(&self) -> Rotation3<f64> {
        Rotation3::from_matrix_unchecked(self.rotation)
    }

    /// `self ∘ rhs`: applies `rhs` first, then `self`.
    ///
    /// With the crate's naming this is `a_to_c = b_to_c.compose(&a_to_b)`.
    pub fn compose(&self, rhs: &RigidTransform) -> RigidTransform {
        let rotation = self.rotation * rhs.rotation;
        let translation = self.rotation * rhs.translation + self.translation;
        let rotation = if orthonormality_error(&rotation) > ORTHONORMAL_TOLERANCE {
            project_to_so3(&rotation).unwrap_or(rotation)
        } else {
            rotation
        };
        RigidTransform {
            rotation,
            translation,
        }
    }

    /// `rhs ∘ self`: applies `self` first, then `rhs`.
    pub fn then(&self, rhs: &RigidTransform) -> RigidTransform {
        rhs.compose(self)
    }

    pub fn inverse(&self) -> RigidTransform {
        let rotation = self.rotation.transpose();
        RigidTransform {
            rotation,
            translation: -(rotation * self.translation),
        }
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Rotation angle of `self⁻¹ ∘ other`, radians.
    pub fn angle_to(&self, other: &RigidTransform) -> f64 {
        geodesic_angle(&self.rotation, &other.rotation)
    }

    /// Distance between the translations, millimeters.
    pub fn translation_distance(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Largest absolute entry of the difference of the 3×4 matrices.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        let r = (self.rotation - other.rotation).amax();
        let t = (self.translation - other.translation).amax();
        r.max(t)
    }

    /// The 12 numbers `R` row-major followed by `t`.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z,
        ]
    }

    pub fn from_row_major(v: &[f64; 12]) -> Option<Self> {
        let rotation = Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
        Self::new(rotation, Vector3::new(v[9], v[10], v[11]))
    }
}

/// `‖RᵀR − I‖∞` (largest absolute entry).
pub fn orthonormality_error(rotation: &Matrix3<f64>) -> f64 {
    (rotation.transpose() * rotation - Matrix3::identity()).amax()
}

/// Closest rotation in the Frobenius sense (polar factor via SVD).
pub fn project_to_so3(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r.iter().all(|v| v.is_finite()).then_some(r)
}

/// Angle of the relative rotation `aᵀb`, radians in `[0, π]`.
pub fn geodesic_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let rel = a.transpose() * b;
    // acos is ill-conditioned near 0; use the atan2 form.
    let sin_vec = Vector3::new(
        rel[(2, 1)] - rel[(1, 2)],
        rel[(0, 2)] - rel[(2, 0)],
        rel[(1, 0)] - rel[(0, 1)],
    );
    let sin = 0.5 * sin_vec.norm();
    let cos = 0.5 * (rel.trace() - 1.0);
    sin.atan2(cos)
}

/// Chordal L2 mean of rotations: the SO(3) projection of their arithmetic mean.
pub fn chordal_mean(rotations: &[Matrix3<f64>]) -> Option<Matrix3<f64>> {
    if rotations.is_empty() {
        return None;
    }
    let sum = rotations.iter().fold(Matrix3::zeros(), |acc, r| acc + r);
    project_to_so3(&(sum / rotations.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    pub(crate) fn random_transform(rng: &mut impl Rng) -> RigidTransform {
        let omega = Vector3::new(
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
        );
        let t = Vector3::new(
            rng.random_range(-1000.0..1000.0),
            rng.random_range(-1000.0..1000.0),
            rng.random_range(-1000.0..1000.0),
        );
        RigidTransform::from_parts(Rotation3::new(omega), t)
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_transform(&mut rng);
        assert_eq!(RigidTransform::identity().compose(&t), t);
        assert_eq!(t.compose(&RigidTransform::identity()), t);
    }

    #[test]
    fn translations_add() {
        let t = RigidTransform::translate(1.0, 0.0, 0.0).compose(&RigidTransform::translate(0.0, 2.0, 0.0));
        assert_eq!(t, RigidTransform::translate(1.0, 2.0, 0.0));
    }

    #[test]
    fn quarter_turns_close() {
        let t = RigidTransform::rot_z(FRAC_PI_2).compose(&RigidTransform::rot_z(FRAC_PI_2));
        assert!(t.max_abs_diff(&RigidTransform::rot_z(PI)) < 1e-12);
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(RigidTransform::identity().inverse(), RigidTransform::identity());
        assert_eq!(
            RigidTransform::translate(3.0, 0.0, 0.0).inverse(),
            RigidTransform::translate(-3.0, 0.0, 0.0)
        );
    }

    #[test]
    fn inverse_cancels_on_random_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let t = random_transform(&mut rng);
            let err = t.compose(&t.inverse()).max_abs_diff(&RigidTransform::identity());
            assert!(err < 1e-9, "{err}");
            let err = t.inverse().compose(&t).max_abs_diff(&RigidTransform::identity());
            assert!(err < 1e-9, "{err}");
        }
    }

    #[test]
    fn composition_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let a = random_transform(&mut rng);
            let b = random_transform(&mut rng);
            let c = random_transform(&mut rng);
            let lhs = a.compose(&b).compose(&c);
            let rhs = a.compose(&b.compose(&c));
            assert!(lhs.max_abs_diff(&rhs) < 1e-9);
        }
    }

    #[test]
    fn long_chains_stay_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let steps: Vec<_> = (0..16).map(|_| random_transform(&mut rng)).collect();
        let mut acc = RigidTransform::identity();
        for i in 0..10_000 {
            acc = steps[i % steps.len()].compose(&acc);
            assert!(orthonormality_error(acc.rotation()) <= 1e-9);
            assert!((acc.rotation().determinant() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn new_repairs_small_drift_and_rejects_reflections() {
        let mut r = Matrix3::identity();
        r[(0, 1)] = 1e-6;
        let t = RigidTransform::new(r, Vector3::zeros()).unwrap();
        assert!(orthonormality_error(t.rotation()) < 1e-12);
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        let t = RigidTransform::new(reflect, Vector3::zeros()).unwrap();
        assert!((t.rotation().determinant() - 1.0).abs() < 1e-12);
        assert!(RigidTransform::new(Matrix3::identity() * f64::NAN, Vector3::zeros()).is_none());
    }

    #[test]
    fn geodesic_angle_matches_construction() {
        for deg in [0.0_f64, 1e-6, 0.5, 45.0, 90.0, 179.0] {
            let a = RigidTransform::rot_x(0.3);
            let b = a.compose(&RigidTransform::rot_y(deg.to_radians()));
            assert!((a.angle_to(&b) - deg.to_radians()).abs() < 1e-12);
        }
    }

    #[test]
    fn chordal_mean_of_symmetric_pair() {
        let a = *RigidTransform::rot_z(0.2).rotation();
        let b = *RigidTransform::rot_z(-0.2).rotation();
        let m = chordal_mean(&[a, b]).unwrap();
        assert!((m - Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn row_major_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_transform(&mut rng);
        let back = RigidTransform::from_row_major(&t.to_row_major()).unwrap();
        assert_eq!(back, t);
    }
}
