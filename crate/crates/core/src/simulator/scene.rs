//! Ground-truth scene: the staircase phantom, the marker, the C-arm and the
//! HMD, all placed in a lab frame (`z` up, phantom base plate at `z = 0`).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::SimulatorError;
use crate::fiducial::MarkerModel;
use crate::geometry::{ProjectiveCamera, RigidTransform};

/// A radiopaque bead glued to a plateau; its center lies in the plateau plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Bead {
    pub label: String,
    /// Center in the lab frame, mm.
    pub position: Vector3<f64>,
    pub radius: f64,
    /// Linear attenuation coefficient, 1/mm.
    pub attenuation: f64,
}

/// Background structures that appear identically in both X-ray shots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Clutter {
    /// A thin planar convex quad (lab frame, mm) with a constant line
    /// integral; models bone edges and table borders.
    Slab {
        corners: [[f64; 3]; 4],
        attenuation: f64,
    },
    /// A homogeneous sphere; `attenuation` is per mm.
    Sphere {
        center: [f64; 3],
        radius: f64,
        attenuation: f64,
    },
}

/// The staircase phantom plus optional clutter.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomScene {
    pub beads: Vec<Bead>,
    pub plateau_heights: [f64; 4],
    /// Phantom frame to lab frame.
    pub base_pose: RigidTransform,
    /// Plateau outlines in the phantom frame (`z` = plateau height).
    pub plateau_size: [f64; 2],
    pub plateau_x: [f64; 4],
    /// Line integral of one plateau, dimensionless.
    pub plateau_attenuation: f64,
    pub clutter: Vec<Clutter>,
}

impl PhantomScene {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        for (i, a) in self.beads.iter().enumerate() {
            if self.beads[..i].iter().any(|b| b.label == a.label) {
                return Err(SimulatorError::Config(format!(
                    "duplicate bead label {}",
                    a.label
                )));
            }
            if !(a.radius > 0.0) || a.attenuation < 0.0 {
                return Err(SimulatorError::Config(format!(
                    "bead {} needs radius > 0",
                    a.label
                )));
            }
        }
        Ok(())
    }

    /// The plateau plane of bead `i` in the lab frame: `(unit normal, offset)`.
    pub fn plateau_plane(&self, i: usize) -> (Vector3<f64>, f64) {
        let n = self.base_pose.apply_vector(&Vector3::z());
        let p = self
            .base_pose
            .apply_point(&Vector3::new(self.plateau_x[i], 0.0, self.plateau_heights[i]));
        (n, n.dot(&p))
    }

    /// Plateau tops as lab-frame quads.
    pub fn plateau_quads(&self) -> Vec<[Vector3<f64>; 4]> {
        let [w, d] = self.plateau_size;
        (0..4)
            .map(|i| {
                let (x, z) = (self.plateau_x[i], self.plateau_heights[i]);
                [
                    Vector3::new(x - w / 2.0, d / 2.0, z),
                    Vector3::new(x - w / 2.0, -d / 2.0, z),
                    Vector3::new(x + w / 2.0, -d / 2.0, z),
                    Vector3::new(x + w / 2.0, d / 2.0, z),
                ]
                .map(|p| self.base_pose.apply_point(&p))
            })
            .collect()
    }

    pub fn with_clutter(mut self, clutter: Vec<Clutter>) -> Self {
        self.clutter = clutter;
        self
    }
}

/// A physical marker in the scene.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkerInstance {
    pub model: MarkerModel,
    pub marker_to_lab: RigidTransform,
    /// Line integral of the metal inlay, dimensionless.
    pub attenuation: f64,
}

impl MarkerInstance {
    pub fn corners_lab(&self) -> [Vector3<f64>; 4] {
        self.model
            .corner_points()
            .map(|p| self.marker_to_lab.apply_point(&p))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub plateau_heights: [f64; 4],
    pub lateral_spacing: f64,
    pub bead_diameter: f64,
    /// Bead attenuation, 1/mm.
    pub bead_attenuation: f64,
    pub plateau_size: [f64; 2],
    pub plateau_attenuation: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            plateau_heights: [20.0, 40.0, 60.0, 80.0],
            lateral_spacing: 60.0,
            bead_diameter: 2.0,
            bead_attenuation: 2.0,
            plateau_size: [60.0, 80.0],
            plateau_attenuation: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XrayConfig {
    pub focal_px: f64,
    pub width: u32,
    pub height: u32,
    /// Source to isocenter, mm.
    pub source_distance: f64,
    pub isocenter: [f64; 3],
    /// Gantry angle of the second view about the lab `y` axis, degrees.
    pub second_view_deg: f64,
    /// Unattenuated flux per pixel.
    pub i0: f64,
}

impl Default for XrayConfig {
    fn default() -> Self {
        Self {
            focal_px: 1200.0,
            width: 1024,
            height: 1024,
            source_distance: 900.0,
            isocenter: [0.0, 0.0, 50.0],
            second_view_deg: 15.0,
            i0: 1000.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmdConfig {
    pub focal_px: f64,
    pub width: u32,
    pub height: u32,
    /// Reference viewpoint relative to the marker.
    pub placement: HmdPlacement,
    /// RGB intensities of the background, the paper and the ink.
    pub background: f64,
    pub paper: f64,
    pub ink: f64,
}

impl Default for HmdConfig {
    fn default() -> Self {
        Self {
            focal_px: 1000.0,
            width: 1280,
            height: 720,
            placement: HmdPlacement::default(),
            background: 0.8,
            paper: 1.0,
            ink: 0.05,
        }
    }
}

/// HMD viewpoint on a sphere around the marker center: `elevation` above
/// the lab horizontal, `azimuth` about lab `z` measured from the `−y` side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmdPlacement {
    pub distance: f64,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
}

impl Default for HmdPlacement {
    fn default() -> Self {
        Self {
            distance: 600.0,
            elevation_deg: 50.0,
            azimuth_deg: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkerConfig {
    pub side: f64,
    pub center: [f64; 3],
    /// Tilt of the marker face toward the HMD (about lab `x`), degrees.
    pub tilt_deg: f64,
    pub attenuation: f64,
}

impl Default for MarkerConfig {
    fn default() -> Self {
        Self {
            side: crate::fiducial::DEFAULT_SIDE_MM,
            center: [0.0, 0.0, 120.0],
            tilt_deg: 30.0,
            attenuation: 0.7,
        }
    }
}

/// Everything needed to build a [`Rig`]; deserializable from TOML.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub phantom: PhantomConfig,
    pub xray: XrayConfig,
    pub hmd: HmdConfig,
    pub marker: MarkerConfig,
    pub clutter: Vec<Clutter>,
}

/// World-camera pose looking from `eye` at `target`, with image `v`
/// pointing along `down` as far as possible. Returns lab → camera.
pub fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>, down: &Vector3<f64>) -> RigidTransform {
    let z = (target - eye).normalize();
    let x = down.cross(&z).normalize();
    let y = z.cross(&x);
    let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    RigidTransform::new(r, -(r * eye)).expect("orthonormal look-at frame")
}

/// The instantiated scene: phantom, marker and camera geometry.
#[derive(Clone, Debug)]
pub struct Rig {
    pub config: SceneConfig,
    pub phantom: PhantomScene,
    pub marker: MarkerInstance,
    /// Lab frame to the HMD's world map. Fixed and arbitrary: nothing in the
    /// pipeline may depend on it.
    pub lab_to_w: RigidTransform,
}

impl Rig {
    pub fn new(config: SceneConfig) -> Result<Self, SimulatorError> {
        let p = &config.phantom;
        if !(p.bead_diameter > 0.0) || !(p.lateral_spacing > 0.0) {
            return Err(SimulatorError::Config(
                "bead diameter and spacing must be positive".into(),
            ));
        }
        if !(config.xray.source_distance > 0.0) {
            return Err(SimulatorError::Config("source distance must be positive".into()));
        }
        let xs: [f64; 4] = std::array::from_fn(|i| (i as f64 - 1.5) * p.lateral_spacing);
        let beads = (0..4)
            .map(|i| Bead {
                label: format!("P{}", i + 1),
                position: Vector3::new(xs[i], 0.0, p.plateau_heights[i]),
                radius: p.bead_diameter / 2.0,
                attenuation: p.bead_attenuation,
            })
            .collect();
        let phantom = PhantomScene {
            beads,
            plateau_heights: p.plateau_heights,
            base_pose: RigidTransform::identity(),
            plateau_size: p.plateau_size,
            plateau_x: xs,
            plateau_attenuation: p.plateau_attenuation,
            clutter: config.clutter.clone(),
        };
        phantom.validate()?;
        let m = &config.marker;
        let model = MarkerModel::new(m.side, 0).map_err(|e| SimulatorError::Config(e.to_string()))?;
        let marker = MarkerInstance {
            model,
            marker_to_lab: RigidTransform::translate(m.center[0], m.center[1], m.center[2])
                .compose(&RigidTransform::rot_x(m.tilt_deg.to_radians())),
            attenuation: m.attenuation,
        };
        let lab_to_w = RigidTransform::translate(250.0, -120.0, 30.0)
            .compose(&RigidTransform::rot_z(0.4))
            .compose(&RigidTransform::rot_x(-0.1));
        let rig = Self {
            config,
            phantom,
            marker,
            lab_to_w,
        };
        rig.xray_device_camera()?;
        rig.rgb_device_camera()?;
        Ok(rig)
    }

    pub fn default_rig() -> Self {
        Self::new(SceneConfig::default()).expect("default scene is valid")
    }

    /// X-ray intrinsics; the extrinsic is the identity, so the C-arm frame is
    /// the X-ray camera frame.
    pub fn xray_device_camera(&self) -> Result<ProjectiveCamera, SimulatorError> {
        let x = &self.config.xray;
        ProjectiveCamera::centered(x.focal_px, x.width, x.height)
            .map_err(|e| SimulatorError::Config(e.to_string()))
    }

    pub fn rgb_device_camera(&self) -> Result<ProjectiveCamera, SimulatorError> {
        let h = &self.config.hmd;
        ProjectiveCamera::centered(h.focal_px, h.width, h.height)
            .map_err(|e| SimulatorError::Config(e.to_string()))
    }

    /// Lab → C-arm for a gantry angle about the lab `y` axis through the
    /// isocenter. Angle 0 puts the detector parallel to the base plate.
    pub fn lab_to_c(&self, gantry_deg: f64) -> RigidTransform {
        let x = &self.config.xray;
        let iso = Vector3::from(x.isocenter);
        let rot = RigidTransform::rot_y(gantry_deg.to_radians());
        let source = iso + rot.apply_vector(&Vector3::new(0.0, 0.0, x.source_distance));
        look_at(&source, &iso, &Vector3::y())
    }

    /// X-ray camera with the lab → camera extrinsic, for rendering.
    pub fn xray_camera_at(&self, gantry_deg: f64) -> ProjectiveCamera {
        self.xray_device_camera()
            .expect("validated")
            .with_extrinsic(self.lab_to_c(gantry_deg))
    }

    /// Lab → HMD for a viewpoint around the marker center.
    pub fn lab_to_hmd(&self, placement: &HmdPlacement) -> RigidTransform {
        let center = Vector3::from(self.config.marker.center);
        let (el, az) = (
            placement.elevation_deg.to_radians(),
            placement.azimuth_deg.to_radians(),
        );
        let dir = RigidTransform::rot_z(az).apply_vector(&Vector3::new(0.0, -el.cos(), el.sin()));
        look_at(&(center + dir * placement.distance), &center, &-Vector3::z())
    }

    pub fn rgb_camera_at(&self, lab_to_hmd: &RigidTransform) -> ProjectiveCamera {
        self.rgb_device_camera()
            .expect("validated")
            .with_extrinsic(*lab_to_hmd)
    }

    /// The marker moved by `displacement` (expressed in the marker frame).
    pub fn displaced_marker(&self, displacement: &RigidTransform) -> MarkerInstance {
        MarkerInstance {
            marker_to_lab: self.marker.marker_to_lab.compose(displacement),
            ..self.marker
        }
    }

    /// Ground-truth `C → W` for a gantry angle.
    pub fn c_to_w(&self, gantry_deg: f64) -> RigidTransform {
        self.lab_to_w.compose(&self.lab_to_c(gantry_deg).inverse())
    }

    /// Ground-truth `W → HMD` for an HMD pose given as lab → HMD.
    pub fn w_to_hmd(&self, lab_to_hmd: &RigidTransform) -> RigidTransform {
        lab_to_hmd.compose(&self.lab_to_w.inverse())
    }

    pub fn beads_w(&self) -> Vec<Vector3<f64>> {
        self.phantom
            .beads
            .iter()
            .map(|b| self.lab_to_w.apply_point(&b.position))
            .collect()
    }
}

/// Six marker displacements used by the calibration experiment, as
/// `[x mm, y mm, rotation about the normal in degrees]` in the marker frame:
/// in-plane shifts of 40–50 mm.
pub const DEFAULT_MARKER_DISPLACEMENTS: [[f64; 3]; 6] = [
    [50.0, 0.0, 0.0],
    [0.0, 45.0, 20.0],
    [-45.0, 0.0, -20.0],
    [0.0, -40.0, 45.0],
    [30.0, 30.0, 90.0],
    [-30.0, -30.0, 180.0],
];

pub fn marker_displacement(d: &[f64; 3]) -> RigidTransform {
    RigidTransform::translate(d[0], d[1], 0.0).compose(&RigidTransform::rot_z(d[2].to_radians()))
}

pub fn default_marker_displacements() -> Vec<RigidTransform> {
    DEFAULT_MARKER_DISPLACEMENTS
        .iter()
        .map(marker_displacement)
        .collect()
}

/// Six HMD viewpoints around the marker.
pub fn default_hmd_placements() -> Vec<HmdPlacement> {
    [
        (550.0, 45.0, -25.0),
        (650.0, 55.0, 20.0),
        (500.0, 60.0, 0.0),
        (700.0, 40.0, 10.0),
        (600.0, 50.0, -10.0),
        (580.0, 65.0, 30.0),
    ]
    .iter()
    .map(|&(distance, elevation_deg, azimuth_deg)| HmdPlacement {
        distance,
        elevation_deg,
        azimuth_deg,
    })
    .collect()
}

/// A bone slab overlapping the marker plus a spherical "femoral head": in
/// the raw X-ray the marker merges with the slab and is not detectable.
pub fn reference_clutter() -> Vec<Clutter> {
    vec![
        Clutter::Slab {
            corners: [
                [20.0, 25.0, 100.0],
                [20.0, -25.0, 100.0],
                [220.0, -25.0, 100.0],
                [220.0, 25.0, 100.0],
            ],
            attenuation: 1.2,
        },
        Clutter::Sphere {
            center: [-120.0, 60.0, 70.0],
            radius: 25.0,
            attenuation: 0.04,
        },
    ]
}
