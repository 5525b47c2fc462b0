//! The lock event: one marker seen by the C-arm and by the HMD at the same
//! instant fixes the C-arm-to-world transform for as long as the C-arm stays
//! in place.

use super::TrackingError;
use crate::fiducial::{
    detect_corners, estimate_pose, log_subtract, CornerObservation, Image2D, MarkerModel, Polarity,
    SubtractionConfig,
};
use crate::geometry::{parse_transform, ProjectiveCamera, RigidTransform};
use crate::textfmt;

/// Identifies one physical placement of the marker. Both modalities must
/// observe the same placement for a lock to be valid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct MarkerPlacement(pub u64);

/// X-ray acquisitions with and without the marker, same C-arm pose.
#[derive(Clone, Debug)]
pub struct XrayAcquisition {
    pub with_marker: Image2D,
    pub without_marker: Image2D,
    pub placement: MarkerPlacement,
}

#[derive(Clone, Debug)]
pub struct RgbAcquisition {
    pub image: Image2D,
    pub placement: MarkerPlacement,
}

/// The two cameras taking part in a lock. The X-ray camera's extrinsic maps
/// the C-arm frame `C` into the X-ray camera frame and the RGB camera's maps
/// the HMD frame into the RGB camera frame; both are usually the identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LockCameras {
    pub xray: ProjectiveCamera,
    pub rgb: ProjectiveCamera,
}

/// Result of one lock event.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationRecord {
    pub view_id: String,
    pub t0: f64,
    pub c_to_w: RigidTransform,
    /// Marker pose seen by the C-arm, `C → M`.
    pub c_to_m: RigidTransform,
    /// Marker pose seen by the HMD, `HMD → M`.
    pub hmd_to_m: RigidTransform,
    /// Tracked HMD pose at `t0`, `W → HMD`.
    pub w_to_hmd: RigidTransform,
}

impl CalibrationRecord {
    pub fn new(
        view_id: impl Into<String>,
        t0: f64,
        c_to_m: RigidTransform,
        hmd_to_m: RigidTransform,
        w_to_hmd: RigidTransform,
    ) -> Self {
        let c_to_w = lock_chain(&c_to_m, &hmd_to_m, &w_to_hmd);
        Self {
            view_id: view_id.into(),
            t0,
            c_to_w,
            c_to_m,
            hmd_to_m,
            w_to_hmd,
        }
    }

    /// Largest element-wise difference between the stored `c_to_w` and the
    /// one recomputed from the stored constituents.
    pub fn consistency_error(&self) -> f64 {
        self.c_to_w
            .max_abs_diff(&lock_chain(&self.c_to_m, &self.hmd_to_m, &self.w_to_hmd))
    }

    /// `C → HMD` at a later time from the tracked HMD pose at that time.
    pub fn c_to_hmd(&self, w_to_hmd_t: &RigidTransform) -> RigidTransform {
        w_to_hmd_t.compose(&self.c_to_w)
    }

    pub fn to_text(&self) -> String {
        let tf = |t: &RigidTransform| textfmt::join_numbers(&t.to_row_major());
        format!(
            "view_id={}\nt0={}\nc_to_w={}\nc_to_m={}\nhmd_to_m={}\nw_to_hmd={}\n",
            self.view_id,
            self.t0,
            tf(&self.c_to_w),
            tf(&self.c_to_m),
            tf(&self.hmd_to_m),
            tf(&self.w_to_hmd)
        )
    }

    pub fn from_text(text: &str) -> Result<Self, TrackingError> {
        let map = textfmt::parse_key_values(text).map_err(TrackingError::Parse)?;
        let get = |k: &str| textfmt::take(&map, k).map_err(TrackingError::Parse);
        let tf = |k: &str| parse_transform(get(k)?).map_err(|e| TrackingError::Parse(format!("{k}: {e}")));
        let record = Self {
            view_id: get("view_id")?.to_string(),
            t0: textfmt::take_f64(&map, "t0").map_err(TrackingError::Parse)?,
            c_to_w: tf("c_to_w")?,
            c_to_m: tf("c_to_m")?,
            hmd_to_m: tf("hmd_to_m")?,
            w_to_hmd: tf("w_to_hmd")?,
        };
        if record.view_id.is_empty() || record.view_id.contains(char::is_whitespace) {
            return Err(TrackingError::Parse("view_id must be a non-empty token".into()));
        }
        if record.consistency_error() > 1e-9 {
            return Err(TrackingError::Parse(
                "c_to_w disagrees with its constituents".into(),
            ));
        }
        Ok(record)
    }
}

// C → M → HMD → W
fn lock_chain(
    c_to_m: &RigidTransform,
    hmd_to_m: &RigidTransform,
    w_to_hmd: &RigidTransform,
) -> RigidTransform {
    w_to_hmd.inverse().compose(&hmd_to_m.inverse()).compose(c_to_m)
}

/// Lock from already detected corners (the path the Monte-Carlo harness uses
/// to inject pixel noise).
pub fn calibrate_from_observations(
    view_id: &str,
    t0: f64,
    xray_corners: &CornerObservation,
    rgb_corners: &CornerObservation,
    cams: &LockCameras,
    w_to_hmd_t0: &RigidTransform,
    marker: &MarkerModel,
) -> Result<CalibrationRecord, TrackingError> {
    let c_to_m = estimate_pose(xray_corners, &cams.xray, marker)?.compose(&cams.xray.extrinsic);
    let hmd_to_m = estimate_pose(rgb_corners, &cams.rgb, marker)?.compose(&cams.rgb.extrinsic);
    Ok(CalibrationRecord::new(
        view_id,
        t0,
        c_to_m,
        hmd_to_m,
        *w_to_hmd_t0,
    ))
}

/// Full lock: subtraction and detection on the X-ray pair, detection on the
/// RGB frame, pose in both, then the C-to-world chain.
pub fn lock_calibration(
    view_id: &str,
    t0: f64,
    xray: &XrayAcquisition,
    rgb: &RgbAcquisition,
    cams: &LockCameras,
    w_to_hmd_t0: &RigidTransform,
    marker: &MarkerModel,
) -> Result<CalibrationRecord, TrackingError> {
    if xray.placement != rgb.placement {
        return Err(TrackingError::StaleMarker {
            xray: xray.placement.0,
            rgb: rgb.placement.0,
        });
    }
    let cfg = SubtractionConfig::relative_to(&xray.without_marker);
    let subtracted = log_subtract(&xray.with_marker, &xray.without_marker, &cfg)?;
    let xray_corners = detect_corners(&subtracted, Polarity::BrightOnDark)?.with_view(view_id);
    let rgb_corners = detect_corners(&rgb.image, Polarity::DarkOnBright)?.with_view(view_id);
    calibrate_from_observations(
        view_id,
        t0,
        &xray_corners,
        &rgb_corners,
        cams,
        w_to_hmd_t0,
        marker,
    )
}

/// World anchor of the marker, `M → W`, from the tracked HMD pose and the
/// HMD's marker observation at the same instant.
pub fn anchor_marker(w_to_hmd_t0: &RigidTransform, hmd_to_m_t0: &RigidTransform) -> RigidTransform {
    w_to_hmd_t0.inverse().compose(&hmd_to_m_t0.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CalibrationRecord {
        CalibrationRecord::new(
            "v1",
            2.5,
            RigidTransform::rot_x(2.9).compose(&RigidTransform::translate(3.0, -4.0, 700.0)),
            RigidTransform::rot_y(0.3).compose(&RigidTransform::translate(-10.0, 5.0, 600.0)),
            RigidTransform::rot_z(-1.1).compose(&RigidTransform::translate(100.0, 20.0, -30.0)),
        )
    }

    #[test]
    fn identity_world_drops_a_factor() {
        let r = CalibrationRecord::new(
            "v",
            0.0,
            sample().c_to_m,
            sample().hmd_to_m,
            RigidTransform::identity(),
        );
        let expected = r.hmd_to_m.inverse().compose(&r.c_to_m);
        assert!(r.c_to_w.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let r = sample();
        assert!(r.consistency_error() < 1e-12);
        assert_eq!(CalibrationRecord::from_text(&r.to_text()).unwrap(), r);
        let mut bad = r.clone();
        bad.c_to_w = RigidTransform::identity();
        assert!(CalibrationRecord::from_text(&bad.to_text()).is_err());
    }

    #[test]
    fn anchor_identity_and_stepwise() {
        assert_eq!(
            anchor_marker(&RigidTransform::identity(), &RigidTransform::identity()),
            RigidTransform::identity()
        );
        let r = sample();
        let m_to_w = anchor_marker(&r.w_to_hmd, &r.hmd_to_m);
        for c in MarkerModel::default().corner_points() {
            let stepwise = r
                .w_to_hmd
                .inverse()
                .apply_point(&r.hmd_to_m.inverse().apply_point(&c));
            assert!((m_to_w.apply_point(&c) - stepwise).norm() < 1e-12);
        }
    }

    #[test]
    fn stale_marker_rejected() {
        let img = Image2D::filled(8, 8, 1.0);
        let cam = ProjectiveCamera::centered(100.0, 8, 8).unwrap();
        let err = lock_calibration(
            "v",
            0.0,
            &XrayAcquisition {
                with_marker: img.clone(),
                without_marker: img.clone(),
                placement: MarkerPlacement(1),
            },
            &RgbAcquisition {
                image: img,
                placement: MarkerPlacement(2),
            },
            &LockCameras { xray: cam, rgb: cam },
            &RigidTransform::identity(),
            &MarkerModel::default(),
        );
        assert_eq!(err, Err(TrackingError::StaleMarker { xray: 1, rgb: 2 }));
    }
}
