//! From X-ray annotations to 3-D guidance geometry in the world frame.
//!
//! A point annotation backprojects to a ray from the X-ray source; the same
//! landmark annotated in two views triangulates to a point. A line
//! annotation spans a plane through the source; two such planes intersect
//! in a trajectory.

mod annotation;
mod scene;

use nalgebra::{Matrix2, Unit, Vector2, Vector3};
use thiserror::Error;

use crate::geometry::{GeometryError, ProjectiveCamera, Ray3};
use crate::tracking::CalibrationRecord;

pub use annotation::{read_annotations, write_annotations, Annotation, AnnotationKind};
pub use scene::{build_geometry, GuidanceGeometry, TriangulatedPoint};

/// Rays or plane normals closer than this are treated as parallel (degrees).
pub const MIN_ANGLE_DEG: f64 = 0.1;
/// Line annotations whose end points are closer than this are rejected (px).
pub const MIN_LINE_LENGTH_PX: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidanceError {
    #[error("rays for color {color:?} are nearly parallel ({angle_deg:.4}°)")]
    NearParallel { angle_deg: f64, color: Option<u32> },
    #[error("planes are nearly parallel ({angle_deg:.4}°)")]
    ParallelPlanes { angle_deg: f64 },
    #[error("line annotation end points coincide")]
    DegenerateLine,
    #[error("expected a {expected} annotation")]
    WrongKind { expected: &'static str },
    #[error("annotation for view {annotation} used with calibration of view {calibration}")]
    ViewMismatch { annotation: String, calibration: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("parse error: {0}")]
    Parse(String),
}

/// The plane `normal · x = offset`, mm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub normal: Unit<Vector3<f64>>,
    pub offset: f64,
}

impl Plane {
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }

    /// Intersection with the line carrying `ray`; `None` when parallel.
    pub fn intersect_ray(&self, ray: &Ray3) -> Option<Vector3<f64>> {
        let denom = self.normal.dot(&ray.direction);
        if denom.abs() < 1e-12 {
            return None;
        }
        Some(ray.at(-self.signed_distance(&ray.origin) / denom))
    }
}

fn check_view(a: &Annotation, calib: &CalibrationRecord) -> Result<(), GuidanceError> {
    if a.view_id != calib.view_id {
        return Err(GuidanceError::ViewMismatch {
            annotation: a.view_id.clone(),
            calibration: calib.view_id.clone(),
        });
    }
    Ok(())
}

fn pixel_ray(pixel: &Vector2<f64>, calib: &CalibrationRecord, cam: &ProjectiveCamera) -> Ray3 {
    cam.backproject(pixel).transformed(&calib.c_to_w)
}

/// World-frame ray from the X-ray source through a point annotation.
pub fn annotation_to_ray(
    a: &Annotation,
    calib: &CalibrationRecord,
    cam: &ProjectiveCamera,
) -> Result<Ray3, GuidanceError> {
    check_view(a, calib)?;
    match a.kind {
        AnnotationKind::Point(p) => Ok(pixel_ray(&p, calib, cam)),
        AnnotationKind::Line(..) => Err(GuidanceError::WrongKind { expected: "point" }),
    }
}

/// Angle between two lines' directions, ignoring orientation, degrees.
fn line_angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b).abs()).to_degrees()
}

// Orders the arguments canonically so that the result is bit-identical when
// they are swapped.
fn canonical<'a>(a: &'a Ray3, b: &'a Ray3) -> (&'a Ray3, &'a Ray3) {
    let key = |r: &Ray3| {
        [
            r.origin.x,
            r.origin.y,
            r.origin.z,
            r.direction.x,
            r.direction.y,
            r.direction.z,
        ]
    };
    let (ka, kb) = (key(a), key(b));
    for (x, y) in ka.iter().zip(&kb) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return (a, b),
            std::cmp::Ordering::Greater => return (b, a),
            std::cmp::Ordering::Equal => {}
        }
    }
    (a, b)
}

/// Midpoint of the common perpendicular of two lines, and half its length.
///
/// The midpoint is also the point minimizing the summed squared distances to
/// both lines.
pub fn triangulate(r1: &Ray3, r2: &Ray3) -> Result<(Vector3<f64>, f64), GuidanceError> {
    let angle_deg = line_angle_deg(&r1.direction, &r2.direction);
    if angle_deg < MIN_ANGLE_DEG {
        return Err(GuidanceError::NearParallel {
            angle_deg,
            color: None,
        });
    }
    let (a, b) = canonical(r1, r2);
    let (d1, d2) = (a.direction.into_inner(), b.direction.into_inner());
    let w0 = a.origin - b.origin;
    let c = d1.dot(&d2);
    let rhs = Vector2::new(-d1.dot(&w0), -d2.dot(&w0));
    // (p1 − p2) ⊥ d1 and ⊥ d2:  [1 −c; c −1] [s; t] = rhs
    let m = Matrix2::new(1.0, -c, c, -1.0);
    let st = m.try_inverse().ok_or(GuidanceError::NearParallel {
        angle_deg,
        color: None,
    })? * rhs;
    let p1 = a.at(st.x);
    let p2 = b.at(st.y);
    Ok(((p1 + p2) * 0.5, (p1 - p2).norm() * 0.5))
}

/// Plane through the X-ray source containing the rays of both end points of
/// a line annotation.
pub fn line_annotation_to_plane(
    a: &Annotation,
    calib: &CalibrationRecord,
    cam: &ProjectiveCamera,
) -> Result<Plane, GuidanceError> {
    check_view(a, calib)?;
    let AnnotationKind::Line(p, q) = a.kind else {
        return Err(GuidanceError::WrongKind { expected: "line" });
    };
    if (p - q).norm() < MIN_LINE_LENGTH_PX {
        return Err(GuidanceError::DegenerateLine);
    }
    let r1 = pixel_ray(&p, calib, cam);
    let r2 = pixel_ray(&q, calib, cam);
    let normal =
        Unit::try_new(r1.direction.cross(&r2.direction), 1e-300).ok_or(GuidanceError::DegenerateLine)?;
    Ok(Plane {
        normal,
        offset: normal.dot(&r1.origin),
    })
}

/// Intersection line of two planes; the origin is its point closest to the
/// coordinate origin.
pub fn intersect_planes(p1: &Plane, p2: &Plane) -> Result<Ray3, GuidanceError> {
    let angle_deg = line_angle_deg(&p1.normal, &p2.normal);
    if angle_deg < MIN_ANGLE_DEG {
        return Err(GuidanceError::ParallelPlanes { angle_deg });
    }
    let (n1, n2) = (p1.normal.into_inner(), p2.normal.into_inner());
    let c = n1.dot(&n2);
    let gram = Matrix2::new(1.0, c, c, 1.0);
    let ab = gram
        .try_inverse()
        .ok_or(GuidanceError::ParallelPlanes { angle_deg })?
        * Vector2::new(p1.offset, p2.offset);
    let origin = n1 * ab.x + n2 * ab.y;
    Ray3::new(origin, n1.cross(&n2)).ok_or(GuidanceError::ParallelPlanes { angle_deg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;

    fn ray(o: [f64; 3], d: [f64; 3]) -> Ray3 {
        Ray3::new(Vector3::from(o), Vector3::from(d)).unwrap()
    }

    fn identity_calib(view: &str) -> CalibrationRecord {
        let id = RigidTransform::identity();
        CalibrationRecord::new(view, 0.0, id, id, id)
    }

    #[test]
    fn skew_lines_hand_case() {
        // the x axis and the line {x = 0, z = 1}: common perpendicular from
        // the origin to (0, 0, 1)
        let (p, r) = triangulate(
            &ray([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            &ray([0.0, 1.0, 1.0], [0.0, 1.0, 0.0]),
        )
        .unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 0.5));
        assert_eq!(r, 0.5);
    }

    #[test]
    fn intersecting_rays_and_symmetry() {
        let p = Vector3::new(3.0, -2.0, 7.0);
        let a = ray([0.0, 0.0, 0.0], [3.0, -2.0, 7.0]);
        let b = Ray3::new(Vector3::new(10.0, 5.0, -1.0), p - Vector3::new(10.0, 5.0, -1.0)).unwrap();
        let (q, r) = triangulate(&a, &b).unwrap();
        assert!((q - p).norm() < 1e-12 && r < 1e-12);
        assert_eq!(triangulate(&a, &b).unwrap(), triangulate(&b, &a).unwrap());
    }

    #[test]
    fn near_parallel_rejected() {
        let a = ray([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let b = ray([1.0, 0.0, 0.0], [0.0, 0.05f64.to_radians().sin(), 1.0]);
        assert!(matches!(
            triangulate(&a, &b),
            Err(GuidanceError::NearParallel { .. })
        ));
        let c = ray([1.0, 0.0, 0.0], [0.0, 0.0, -1.0]);
        assert!(triangulate(&a, &c).is_err());
    }

    #[test]
    fn identity_calibration_ray_is_backprojection() {
        let cam = ProjectiveCamera::centered(1200.0, 1024, 1024).unwrap();
        let a = Annotation::point("v", Vector2::new(100.0, 700.0), 1);
        let r = annotation_to_ray(&a, &identity_calib("v"), &cam).unwrap();
        let b = cam.backproject(&Vector2::new(100.0, 700.0));
        assert!((r.origin - b.origin).norm() < 1e-12);
        assert!((r.direction.into_inner() - b.direction.into_inner()).norm() < 1e-12);
        assert!(matches!(
            annotation_to_ray(&a, &identity_calib("w"), &cam),
            Err(GuidanceError::ViewMismatch { .. })
        ));
    }

    #[test]
    fn horizontal_line_plane() {
        let cam = ProjectiveCamera::centered(1000.0, 641, 481).unwrap();
        let calib = identity_calib("v");
        let a = Annotation::line("v", Vector2::new(100.0, 240.0), Vector2::new(500.0, 240.0), 2);
        let plane = line_annotation_to_plane(&a, &calib, &cam).unwrap();
        // contains the optical axis (z) and the detector u axis (x)
        assert!(plane.normal.dot(&Vector3::z()).abs() < 1e-12);
        assert!(plane.normal.dot(&Vector3::x()).abs() < 1e-12);
        assert!(plane.offset.abs() < 1e-12);
        let swapped = Annotation::line("v", Vector2::new(500.0, 240.0), Vector2::new(100.0, 240.0), 2);
        let p2 = line_annotation_to_plane(&swapped, &calib, &cam).unwrap();
        assert!((p2.normal.into_inner() + plane.normal.into_inner()).norm() < 1e-12);
        let degenerate = Annotation::line("v", Vector2::new(5.0, 5.0), Vector2::new(5.0, 5.0), 2);
        assert_eq!(
            line_annotation_to_plane(&degenerate, &calib, &cam),
            Err(GuidanceError::DegenerateLine)
        );
    }

    #[test]
    fn plane_pair_intersections() {
        let z0 = Plane {
            normal: Vector3::z_axis(),
            offset: 0.0,
        };
        let y0 = Plane {
            normal: Vector3::y_axis(),
            offset: 0.0,
        };
        let line = intersect_planes(&z0, &y0).unwrap();
        assert_eq!(line.origin, Vector3::zeros());
        assert!((line.direction.into_inner().abs() - Vector3::x()).norm() < 1e-15);
        assert!(matches!(
            intersect_planes(&z0, &z0),
            Err(GuidanceError::ParallelPlanes { .. })
        ));

        // a plane and its copy rotated 90° about a line it contains
        let axis_point = Vector3::new(0.0, 2.0, 5.0);
        let plane = Plane {
            normal: Vector3::z_axis(),
            offset: 5.0,
        };
        let rot = RigidTransform::translate(0.0, 2.0, 5.0)
            .compose(&RigidTransform::rot_x(std::f64::consts::FRAC_PI_2))
            .compose(&RigidTransform::translate(0.0, -2.0, -5.0));
        let n = Unit::new_normalize(rot.apply_vector(&plane.normal));
        let rotated = Plane {
            normal: n,
            offset: n.dot(&axis_point),
        };
        let line = intersect_planes(&plane, &rotated).unwrap();
        assert!(line.distance_to_point(&axis_point) < 1e-12);
        assert!(line.direction.cross(&Vector3::x()).norm() < 1e-12);
    }
}
