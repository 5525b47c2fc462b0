//! Accumulated guidance geometry and its plain-text scene format:
//!
//! ```text
//! ray <color> ox oy oz dx dy dz
//! point <color> x y z residual
//! plane nx ny nz offset
//! trajectory ox oy oz dx dy dz
//! ```
//!
//! All values are world-frame millimeters; `#` lines are comments.

use std::collections::BTreeMap;

use nalgebra::{Unit, Vector3};

use super::{
    annotation_to_ray, intersect_planes, line_annotation_to_plane, triangulate, Annotation, AnnotationKind,
    GuidanceError, Plane,
};
use crate::geometry::{GeometryError, ProjectiveCamera, Ray3};
use crate::textfmt;
use crate::tracking::CalibrationRecord;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangulatedPoint {
    pub position: Vector3<f64>,
    pub residual: f64,
    pub color: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GuidanceGeometry {
    pub rays: Vec<(Ray3, u32)>,
    pub points: Vec<TriangulatedPoint>,
    pub planes: Vec<Plane>,
    pub trajectories: Vec<Ray3>,
}

impl GuidanceGeometry {
    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
            && self.points.is_empty()
            && self.planes.is_empty()
            && self.trajectories.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# guidance geometry, world frame, mm\n");
        let v = |a: &Vector3<f64>| textfmt::join_numbers(a.as_slice());
        for (r, c) in &self.rays {
            out += &format!("ray {c} {} {}\n", v(&r.origin), v(&r.direction));
        }
        for p in &self.points {
            out += &format!("point {} {} {}\n", p.color, v(&p.position), p.residual);
        }
        for p in &self.planes {
            out += &format!("plane {} {}\n", v(&p.normal), p.offset);
        }
        for r in &self.trajectories {
            out += &format!("trajectory {} {}\n", v(&r.origin), v(&r.direction));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GuidanceError> {
        let mut g = GuidanceGeometry::default();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: &str| GuidanceError::Parse(format!("{m}: {line:?}"));
            let (tag, rest) = line.split_once(' ').ok_or_else(|| bad("missing fields"))?;
            let (color, rest) = match tag {
                "ray" | "point" => {
                    let (c, r) = rest.trim().split_once(' ').ok_or_else(|| bad("missing fields"))?;
                    (Some(c.parse::<u32>().map_err(|_| bad("bad color"))?), r)
                }
                _ => (None, rest),
            };
            let n = textfmt::parse_numbers(rest).map_err(GuidanceError::Parse)?;
            let want = match tag {
                "ray" | "trajectory" => 6,
                "point" | "plane" => 4,
                _ => return Err(bad("unknown record")),
            };
            if n.len() != want {
                return Err(bad("wrong number of values"));
            }
            let ray = || {
                Ray3::new(Vector3::new(n[0], n[1], n[2]), Vector3::new(n[3], n[4], n[5]))
                    .ok_or_else(|| bad("zero direction"))
            };
            match tag {
                "ray" => g.rays.push((ray()?, color.expect("parsed above"))),
                "trajectory" => g.trajectories.push(ray()?),
                "point" => {
                    if !(n[3] >= 0.0) {
                        return Err(bad("negative residual"));
                    }
                    g.points.push(TriangulatedPoint {
                        position: Vector3::new(n[0], n[1], n[2]),
                        residual: n[3],
                        color: color.expect("parsed above"),
                    });
                }
                _ => {
                    let normal = Unit::try_new(Vector3::new(n[0], n[1], n[2]), 1e-300)
                        .ok_or_else(|| bad("zero normal"))?;
                    g.planes.push(Plane { normal, offset: n[3] });
                }
            }
        }
        Ok(g)
    }
}

/// Turns annotations into guidance geometry.
///
/// Every point annotation yields a ray. A color annotated as a point in two
/// or more views is triangulated from its first two views (in annotation
/// order). Every line annotation yields a plane, and a color drawn as a line
/// in two or more views yields the trajectory of its first two planes.
pub fn build_geometry(
    annotations: &[Annotation],
    views: &BTreeMap<String, (CalibrationRecord, ProjectiveCamera)>,
) -> Result<GuidanceGeometry, GuidanceError> {
    let lookup = |view: &str| {
        views.get(view).ok_or_else(|| {
            GuidanceError::Geometry(GeometryError::NoPath {
                from: format!("C[{view}]"),
                to: "W".into(),
            })
        })
    };
    let mut g = GuidanceGeometry::default();
    // color -> first ray per distinct view, in order
    let mut point_views: BTreeMap<u32, Vec<(String, Ray3)>> = BTreeMap::new();
    let mut line_views: BTreeMap<u32, Vec<(String, Plane)>> = BTreeMap::new();
    let mut point_order = Vec::new();
    let mut line_order = Vec::new();

    for a in annotations {
        let (calib, cam) = lookup(&a.view_id)?;
        match a.kind {
            AnnotationKind::Point(_) => {
                let ray = annotation_to_ray(a, calib, cam)?;
                g.rays.push((ray, a.color));
                let list = point_views.entry(a.color).or_default();
                if list.is_empty() {
                    point_order.push(a.color);
                }
                if !list.iter().any(|(v, _)| *v == a.view_id) {
                    list.push((a.view_id.clone(), ray));
                }
            }
            AnnotationKind::Line(..) => {
                let plane = line_annotation_to_plane(a, calib, cam)?;
                g.planes.push(plane);
                let list = line_views.entry(a.color).or_default();
                if list.is_empty() {
                    line_order.push(a.color);
                }
                if !list.iter().any(|(v, _)| *v == a.view_id) {
                    list.push((a.view_id.clone(), plane));
                }
            }
        }
    }
    for color in point_order {
        if let [(_, r1), (_, r2), ..] = point_views[&color].as_slice() {
            let (position, residual) = triangulate(r1, r2).map_err(|e| match e {
                GuidanceError::NearParallel { angle_deg, .. } => GuidanceError::NearParallel {
                    angle_deg,
                    color: Some(color),
                },
                other => other,
            })?;
            g.points.push(TriangulatedPoint {
                position,
                residual,
                color,
            });
        }
    }
    for color in line_order {
        if let [(_, p1), (_, p2), ..] = line_views[&color].as_slice() {
            g.trajectories.push(intersect_planes(p1, p2)?);
        }
    }
    Ok(g)
}
