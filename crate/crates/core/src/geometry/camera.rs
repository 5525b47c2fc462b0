use nalgebra::{Matrix3, Unit, Vector2, Vector3};

use super::transform::RigidTransform;
use super::GeometryError;

/// Points closer than this to the camera plane cannot be projected (mm).
pub const MIN_DEPTH: f64 = 1e-9;

/// A ray `origin + s·direction`, `s ≥ 0`. Millimeters; `direction` is unit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray3 {
    pub origin: Vector3<f64>,
    pub direction: Unit<Vector3<f64>>,
}

impl Ray3 {
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Option<Self> {
        let direction = Unit::try_new(direction, 1e-300)?;
        Some(Self { origin, direction })
    }

    pub fn at(&self, s: f64) -> Vector3<f64> {
        self.origin + self.direction.into_inner() * s
    }

    /// Distance from `p` to the infinite line carrying this ray.
    pub fn distance_to_point(&self, p: &Vector3<f64>) -> f64 {
        let d = p - self.origin;
        (d - self.direction.into_inner() * d.dot(&self.direction)).norm()
    }

    pub fn transformed(&self, x: &RigidTransform) -> Ray3 {
        Ray3 {
            origin: x.apply_point(&self.origin),
            direction: Unit::new_normalize(x.apply_vector(&self.direction)),
        }
    }
}

/// Ideal pinhole camera: intrinsics in pixels plus an extrinsic mapping the
/// world-side frame into the camera frame.
///
/// Pixel `(0, 0)` is the center of the top-left pixel, `u` grows right and
/// `v` grows down. The camera frame is right-handed with `+z` along the
/// viewing direction. For the C-arm the center of projection is the X-ray
/// source and the image plane is the detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectiveCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub extrinsic: RigidTransform,
}

impl ProjectiveCamera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        extrinsic: RigidTransform,
    ) -> Result<Self, GeometryError> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            extrinsic,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Square pixels, principal point at the image center.
    pub fn centered(focal: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
            RigidTransform::identity(),
        )
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidCamera(
                "focal lengths must be positive".into(),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidCamera("image size must be non-zero".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(GeometryError::InvalidCamera(
                "principal point outside the image".into(),
            ));
        }
        Ok(())
    }

    pub fn with_extrinsic(&self, extrinsic: RigidTransform) -> Self {
        Self { extrinsic, ..*self }
    }

    pub fn intrinsic_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Projects a point given in camera coordinates.
    pub fn project_camera_point(&self, p: &Vector3<f64>) -> Result<Vector2<f64>, GeometryError> {
        if !(p.z > MIN_DEPTH) {
            return Err(GeometryError::BehindCamera { depth: p.z });
        }
        Ok(Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    pub fn project(&self, p_world: &Vector3<f64>) -> Result<Vector2<f64>, GeometryError> {
        self.project_camera_point(&self.extrinsic.apply_point(p_world))
    }

    /// Center of projection in the world-side frame.
    pub fn center(&self) -> Vector3<f64> {
        let r = self.extrinsic.rotation();
        -(r.transpose() * self.extrinsic.translation())
    }

    /// Unit viewing direction through `pixel`, in camera coordinates.
    pub fn bearing(&self, pixel: &Vector2<f64>) -> Unit<Vector3<f64>> {
        Unit::new_normalize(Vector3::new(
            (pixel.x - self.cx) / self.fx,
            (pixel.y - self.cy) / self.fy,
            1.0,
        ))
    }

    /// The ray from the center of projection through `pixel`, in the
    /// world-side frame. Pixels outside the image are valid.
    pub fn backproject(&self, pixel: &Vector2<f64>) -> Ray3 {
        let r_t = self.extrinsic.rotation().transpose();
        Ray3 {
            origin: self.center(),
            direction: Unit::new_normalize(r_t * self.bearing(pixel).into_inner()),
        }
    }

    /// Optical axis (+z of the camera) in the world-side frame.
    pub fn optical_axis(&self) -> Unit<Vector3<f64>> {
        Unit::new_normalize(self.extrinsic.rotation().transpose() * Vector3::z())
    }

    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= -0.5
            && pixel.y >= -0.5
            && pixel.x < self.width as f64 - 0.5
            && pixel.y < self.height as f64 - 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam() -> ProjectiveCamera {
        ProjectiveCamera::new(
            1000.0,
            1000.0,
            500.0,
            400.0,
            1000,
            800,
            RigidTransform::identity(),
        )
        .unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        for z in [1.0, 250.0, 1e5] {
            let px = cam().project(&Vector3::new(0.0, 0.0, z)).unwrap();
            assert_eq!(px, Vector2::new(500.0, 400.0));
        }
    }

    #[test]
    fn pinhole_arithmetic() {
        let px = cam().project(&Vector3::new(10.0, 0.0, 1000.0)).unwrap();
        assert_eq!(px, Vector2::new(510.0, 400.0));
    }

    #[test]
    fn behind_camera_is_an_error() {
        assert!(matches!(
            cam().project(&Vector3::new(0.0, 0.0, 0.0)),
            Err(GeometryError::BehindCamera { .. })
        ));
        assert!(cam().project(&Vector3::new(0.0, 0.0, -5.0)).is_err());
    }

    #[test]
    fn principal_point_backprojects_along_axis() {
        let extr = RigidTransform::from_parts(
            Rotation3::new(Vector3::new(0.2, -0.4, 0.9)),
            Vector3::new(5.0, 6.0, 7.0),
        );
        let c = cam().with_extrinsic(extr);
        let ray = c.backproject(&Vector2::new(c.cx, c.cy));
        assert!((ray.direction.into_inner() - c.optical_axis().into_inner()).norm() < 1e-15);
        let other = c.backproject(&Vector2::new(-300.0, 2000.0));
        assert_eq!(ray.origin, other.origin);
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        assert!(ProjectiveCamera::new(0.0, 1.0, 1.0, 1.0, 4, 4, RigidTransform::identity()).is_err());
        assert!(ProjectiveCamera::new(1.0, 1.0, 4.0, 1.0, 4, 4, RigidTransform::identity()).is_err());
    }

    #[test]
    fn project_backproject_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let extr = RigidTransform::from_parts(
            Rotation3::new(Vector3::new(0.3, 0.1, -0.2)),
            Vector3::new(20.0, -15.0, 600.0),
        );
        let c = cam().with_extrinsic(extr);
        for _ in 0..1000 {
            let pc = Vector3::new(
                rng.random_range(-400.0..400.0),
                rng.random_range(-400.0..400.0),
                rng.random_range(50.0..3000.0),
            );
            let pw = extr.inverse().apply_point(&pc);
            let px = c.project(&pw).unwrap();
            let ray = c.backproject(&px);
            assert!(ray.distance_to_point(&pw) < 1e-6);
            let s = (pw - ray.origin).dot(&ray.direction);
            let again = c.project(&ray.at(s)).unwrap();
            assert!((again - px).norm() < 1e-9);
        }
    }
}
