//! Planar marker pose from four corners: homography decomposition followed by
//! Gauss–Newton refinement of the reprojection error.

use nalgebra::{Matrix3, SMatrix, SVector, Vector2, Vector3};

use super::homography::{collinearity_measure, homography_4pt};
use super::{CornerObservation, FiducialError, MarkerModel};
use crate::geometry::{project_to_so3, ProjectiveCamera, RigidTransform};

const MAX_ITERATIONS: usize = 20;
const STEP_TOLERANCE: f64 = 1e-10;
const MIN_COLLINEARITY: f64 = 1e-6;

/// The marker-to-camera extrinsic: maps marker coordinates into the camera
/// frame. Only the intrinsics of `cam` are used.
pub fn estimate_extrinsic(
    obs: &CornerObservation,
    cam: &ProjectiveCamera,
    model: &MarkerModel,
) -> Result<RigidTransform, FiducialError> {
    if collinearity_measure(&obs.corners) < MIN_COLLINEARITY {
        return Err(FiducialError::Degenerate("three corners are collinear".into()));
    }
    let object = model.corner_points();
    let planar = object.map(|p| p.xy());
    let normalized = obs
        .corners
        .map(|c| Vector2::new((c.x - cam.cx) / cam.fx, (c.y - cam.cy) / cam.fy));
    let h = homography_4pt(&planar, &normalized)
        .ok_or_else(|| FiducialError::Degenerate("homography is rank deficient".into()))?;

    let (h1, h2, h3) = (h.column(0), h.column(1), h.column(2));
    let mut lambda = 2.0 / (h1.norm() + h2.norm());
    // the marker center maps to λ·h3 and must lie in front of the camera
    if h3.z * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1 = h1 * lambda;
    let r2 = h2 * lambda;
    let r3 = r1.cross(&r2);
    let rotation = project_to_so3(&Matrix3::from_columns(&[r1, r2, r3]))
        .ok_or_else(|| FiducialError::Degenerate("rotation decomposition failed".into()))?;
    let initial = RigidTransform::new(rotation, h3 * lambda)
        .ok_or_else(|| FiducialError::Degenerate("non-finite pose".into()))?;

    Ok(refine(initial, &object, &obs.corners, cam))
}

/// The camera-to-marker transform (inverse of [`estimate_extrinsic`]): maps
/// camera-frame coordinates into the marker frame.
pub fn estimate_pose(
    obs: &CornerObservation,
    cam: &ProjectiveCamera,
    model: &MarkerModel,
) -> Result<RigidTransform, FiducialError> {
    estimate_extrinsic(obs, cam, model).map(|x| x.inverse())
}

/// Mean pixel distance between the observed corners and the model corners
/// projected with `marker_to_camera`. Infinite if a corner is behind the camera.
pub fn mean_reprojection_error(
    marker_to_camera: &RigidTransform,
    obs: &CornerObservation,
    cam: &ProjectiveCamera,
    model: &MarkerModel,
) -> f64 {
    reprojection_error(marker_to_camera, &model.corner_points(), &obs.corners, cam)
}

fn reprojection_error(
    pose: &RigidTransform,
    object: &[Vector3<f64>; 4],
    pixels: &[Vector2<f64>; 4],
    cam: &ProjectiveCamera,
) -> f64 {
    let mut total = 0.0;
    for (x, u) in object.iter().zip(pixels) {
        match cam.project_camera_point(&pose.apply_point(x)) {
            Ok(p) => total += (p - u).norm(),
            Err(_) => return f64::INFINITY,
        }
    }
    total / 4.0
}

// Left-multiplicative update: R ← exp(ω)·R, t ← t + v.
fn refine(
    initial: RigidTransform,
    object: &[Vector3<f64>; 4],
    pixels: &[Vector2<f64>; 4],
    cam: &ProjectiveCamera,
) -> RigidTransform {
    let mut pose = initial;
    let mut best = (reprojection_error(&pose, object, pixels, cam), pose);
    for _ in 0..MAX_ITERATIONS {
        let mut jtj = SMatrix::<f64, 6, 6>::zeros();
        let mut jtr = SVector::<f64, 6>::zeros();
        for (x, u) in object.iter().zip(pixels) {
            let rx = pose.rotation() * x;
            let p = rx + pose.translation();
            if p.z <= 0.0 {
                return best.1;
            }
            let iz = 1.0 / p.z;
            let proj = Vector2::new(cam.fx * p.x * iz + cam.cx, cam.fy * p.y * iz + cam.cy);
            let r = proj - u;
            let dproj = SMatrix::<f64, 2, 3>::new(
                cam.fx * iz,
                0.0,
                -cam.fx * p.x * iz * iz,
                0.0,
                cam.fy * iz,
                -cam.fy * p.y * iz * iz,
            );
            let mut dp = SMatrix::<f64, 3, 6>::zeros();
            dp.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-rx.cross_matrix()));
            dp.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
            let j = dproj * dp;
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        let Some(step) = jtj.cholesky().map(|c| c.solve(&(-jtr))) else {
            break;
        };
        let omega = step.fixed_rows::<3>(0).into_owned();
        let v = step.fixed_rows::<3>(3).into_owned();
        let rotation = RigidTransform::exp_rotation(&omega).rotation() * pose.rotation();
        let Some(next) = RigidTransform::new(rotation, pose.translation() + v) else {
            break;
        };
        pose = next;
        let err = reprojection_error(&pose, object, pixels, cam);
        if err <= best.0 {
            best = (err, pose);
        }
        if step.norm() < STEP_TOLERANCE {
            break;
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn observe(cam: &ProjectiveCamera, m_to_c: &RigidTransform, model: &MarkerModel) -> CornerObservation {
        let corners = model
            .corner_points()
            .map(|p| cam.project_camera_point(&m_to_c.apply_point(&p)).unwrap());
        CornerObservation::new(corners, "test").unwrap()
    }

    #[test]
    fn fronto_parallel_exact() {
        let cam = ProjectiveCamera::centered(1200.0, 1024, 1024).unwrap();
        let model = MarkerModel::default();
        // facing the camera: marker +z points back at the camera
        let m_to_c =
            RigidTransform::translate(0.0, 0.0, 500.0).compose(&RigidTransform::rot_x(std::f64::consts::PI));
        let est = estimate_extrinsic(&observe(&cam, &m_to_c, &model), &cam, &model).unwrap();
        assert!(est.translation_distance(&m_to_c) < 1e-6);
        assert!(est.angle_to(&m_to_c) < 1e-8);
        let c_to_m = estimate_pose(&observe(&cam, &m_to_c, &model), &cam, &model).unwrap();
        assert!(c_to_m.compose(&m_to_c).max_abs_diff(&RigidTransform::identity()) < 1e-9);
    }

    #[test]
    fn random_pose_round_trip() {
        let cam = ProjectiveCamera::centered(1200.0, 1024, 1024).unwrap();
        let model = MarkerModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut tested = 0;
        while tested < 200 {
            let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
            let tilt = RigidTransform::exp_rotation(&(axis.normalize() * rng.random_range(0.0..1.2)));
            let spin = RigidTransform::rot_z(rng.random_range(-3.1..3.1));
            let pos = RigidTransform::translate(
                rng.random_range(-80.0..80.0),
                rng.random_range(-80.0..80.0),
                rng.random_range(300.0..1200.0),
            );
            let m_to_c = pos
                .compose(&RigidTransform::rot_x(std::f64::consts::PI))
                .compose(&tilt)
                .compose(&spin);
            let corners = model.corner_points().map(|p| m_to_c.apply_point(&p));
            if corners.iter().any(|p| p.z < 50.0) {
                continue;
            }
            let est = estimate_extrinsic(&observe(&cam, &m_to_c, &model), &cam, &model).unwrap();
            assert!(
                est.translation_distance(&m_to_c) < 1e-6,
                "{}",
                est.translation_distance(&m_to_c)
            );
            assert!(est.angle_to(&m_to_c) < 1e-8);
            tested += 1;
        }
    }

    #[test]
    fn collinear_corners_are_degenerate() {
        let cam = ProjectiveCamera::centered(1000.0, 640, 480).unwrap();
        let obs = CornerObservation {
            corners: [
                Vector2::new(0.0, 0.0),
                Vector2::new(10.0, 0.0),
                Vector2::new(20.0, 0.0),
                Vector2::new(30.0, 0.0),
            ],
            source_view: String::new(),
        };
        assert!(matches!(
            estimate_pose(&obs, &cam, &MarkerModel::default()),
            Err(FiducialError::Degenerate(_))
        ));
    }
}
