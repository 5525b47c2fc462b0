//! Analytic X-ray and RGB rendering.
//!
//! Each detector pixel integrates over its full square. Planar primitives
//! (marker inlay, plateaus, slabs) are thin sheets with a constant line
//! integral, so their contribution is that integral times the exact area of
//! the projected polygon inside the pixel. Spheres integrate the chord length
//! on a regular sub-pixel grid. The X-ray value is `I0·exp(−L̄)` with `L̄` the
//! pixel-averaged line integral, which keeps structures exactly additive in
//! the log domain.

use nalgebra::{Vector2, Vector3};

use super::scene::{Clutter, MarkerInstance, PhantomScene};
use crate::fiducial::Image2D;
use crate::geometry::ProjectiveCamera;

/// Sub-samples per axis for spheres.
const BEAD_SUPERSAMPLING: usize = 16;
const SPHERE_SUPERSAMPLING: usize = 8;

/// RGB intensities of the HMD camera image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RgbShading {
    pub background: f64,
    pub paper: f64,
    pub ink: f64,
}

impl Default for RgbShading {
    fn default() -> Self {
        Self {
            background: 0.8,
            paper: 1.0,
            ink: 0.05,
        }
    }
}

/// Pixel-averaged line integral through everything in the scene plus the
/// optional marker. `cam.extrinsic` maps the lab frame into the camera.
pub fn render_line_integral(
    scene: Option<&PhantomScene>,
    marker: Option<&MarkerInstance>,
    cam: &ProjectiveCamera,
) -> Image2D {
    let mut img = Image2D::filled(cam.width as usize, cam.height as usize, 0.0);
    if let Some(scene) = scene {
        for quad in scene.plateau_quads() {
            add_planar_quad(&mut img, cam, &quad, scene.plateau_attenuation);
        }
        for c in &scene.clutter {
            match c {
                Clutter::Slab { corners, attenuation } => {
                    add_planar_quad(&mut img, cam, &corners.map(Vector3::from), *attenuation)
                }
                Clutter::Sphere {
                    center,
                    radius,
                    attenuation,
                } => add_sphere(
                    &mut img,
                    cam,
                    &Vector3::from(*center),
                    *radius,
                    *attenuation,
                    SPHERE_SUPERSAMPLING,
                ),
            }
        }
        for b in &scene.beads {
            add_sphere(
                &mut img,
                cam,
                &b.position,
                b.radius,
                b.attenuation,
                BEAD_SUPERSAMPLING,
            );
        }
    }
    if let Some(m) = marker {
        add_marker(&mut img, cam, m, m.attenuation);
    }
    img
}

/// Beer–Lambert transmission image `I0·exp(−L̄)`.
pub fn render_xray(
    scene: Option<&PhantomScene>,
    marker: Option<&MarkerInstance>,
    cam: &ProjectiveCamera,
    i0: f64,
) -> Image2D {
    render_line_integral(scene, marker, cam).map(|l| i0 * (-l).exp())
}

/// HMD camera image of the printed marker on a uniform background.
pub fn render_rgb(marker: &MarkerInstance, cam: &ProjectiveCamera, shading: &RgbShading) -> Image2D {
    let mut paper = Image2D::filled(cam.width as usize, cam.height as usize, 0.0);
    let paper_quad = marker
        .model
        .paper_quad()
        .map(|p| marker.marker_to_lab.apply_point(&Vector3::new(p.x, p.y, 0.0)));
    add_planar_quad(&mut paper, cam, &paper_quad, 1.0);
    let mut ink = Image2D::filled(cam.width as usize, cam.height as usize, 0.0);
    add_marker(&mut ink, cam, marker, 1.0);
    let mut out = Image2D::filled(cam.width as usize, cam.height as usize, 0.0);
    for (o, (p, i)) in out.data_mut().iter_mut().zip(paper.data().iter().zip(ink.data())) {
        *o = shading.background * (1.0 - p) + shading.paper * (p - i) + shading.ink * i;
    }
    out
}

fn add_marker(img: &mut Image2D, cam: &ProjectiveCamera, m: &MarkerInstance, value: f64) {
    for (sign, quad) in m.model.ink_quads() {
        let q3 = quad.map(|p| m.marker_to_lab.apply_point(&Vector3::new(p.x, p.y, 0.0)));
        add_planar_quad(img, cam, &q3, sign * value);
    }
}

/// Adds `value × covered fraction` of the projected quad to every pixel.
/// Quads with a corner behind the camera are skipped.
fn add_planar_quad(img: &mut Image2D, cam: &ProjectiveCamera, quad: &[Vector3<f64>; 4], value: f64) {
    let mut pts = [Vector2::zeros(); 4];
    for (p, q) in pts.iter_mut().zip(quad) {
        match cam.project(q) {
            Ok(px) => *p = px,
            Err(_) => return,
        }
    }
    let (w, h) = (img.width() as i64, img.height() as i64);
    let min_x = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let max_x = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_y = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let x0 = ((min_x + 0.5).floor() as i64).max(0);
    let x1 = ((max_x + 0.5).ceil() as i64).min(w - 1);
    let y0 = ((min_y + 0.5).floor() as i64).max(0);
    let y1 = ((max_y + 0.5).ceil() as i64).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            // pixel-local coordinates keep the clipping arithmetic small
            let local = pts.map(|p| p - Vector2::new(x as f64, y as f64));
            let a = clipped_area(&local);
            if a > 0.0 {
                let (ux, uy) = (x as usize, y as usize);
                img.set(ux, uy, img.get(ux, uy) + value * a);
            }
        }
    }
}

/// Area of a convex polygon inside the unit square centered at the origin.
fn clipped_area(poly: &[Vector2<f64>; 4]) -> f64 {
    let mut buf_a = [Vector2::zeros(); 12];
    let mut buf_b = [Vector2::zeros(); 12];
    buf_a[..4].copy_from_slice(poly);
    let mut n = 4;
    // (axis, sign): keep points with sign·coord ≤ 0.5
    for (axis, sign) in [(0usize, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)] {
        let inside = |p: &Vector2<f64>| sign * p[axis] <= 0.5;
        let mut m = 0;
        for i in 0..n {
            let cur = buf_a[i];
            let prev = buf_a[(i + n - 1) % n];
            let (ci, pi) = (inside(&cur), inside(&prev));
            if ci != pi {
                let t = (0.5 * sign - prev[axis]) / (cur[axis] - prev[axis]);
                buf_b[m] = prev + (cur - prev) * t;
                m += 1;
            }
            if ci {
                buf_b[m] = cur;
                m += 1;
            }
        }
        if m < 3 {
            return 0.0;
        }
        n = m;
        std::mem::swap(&mut buf_a, &mut buf_b);
    }
    let mut twice = 0.0;
    for i in 0..n {
        let (p, q) = (buf_a[i], buf_a[(i + 1) % n]);
        twice += p.x * q.y - q.x * p.y;
    }
    (0.5 * twice).abs()
}

/// Adds the pixel-averaged chord length × `mu` of a sphere.
fn add_sphere(
    img: &mut Image2D,
    cam: &ProjectiveCamera,
    center: &Vector3<f64>,
    radius: f64,
    mu: f64,
    ss: usize,
) {
    let c = cam.extrinsic.apply_point(center);
    if c.z - radius <= 0.0 {
        return;
    }
    // the projection of the bounding cube contains the sphere's outline
    let mut min = Vector2::repeat(f64::INFINITY);
    let mut max = Vector2::repeat(f64::NEG_INFINITY);
    for i in 0..8 {
        let corner = c + Vector3::new(
            if i & 1 == 0 { -radius } else { radius },
            if i & 2 == 0 { -radius } else { radius },
            if i & 4 == 0 { -radius } else { radius },
        );
        let Ok(p) = cam.project_camera_point(&corner) else {
            return;
        };
        min = min.inf(&p);
        max = max.sup(&p);
    }
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = ((min.x - 0.5).floor() as i64).max(0);
    let x1 = ((max.x + 0.5).ceil() as i64).min(w - 1);
    let y0 = ((min.y - 0.5).floor() as i64).max(0);
    let y1 = ((max.y + 0.5).ceil() as i64).min(h - 1);
    let r2 = radius * radius;
    let cc = c.norm_squared();
    let inv = 1.0 / (ss * ss) as f64;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let mut sum = 0.0;
            for sy in 0..ss {
                let v = y as f64 - 0.5 + (sy as f64 + 0.5) / ss as f64;
                for sx in 0..ss {
                    let u = x as f64 - 0.5 + (sx as f64 + 0.5) / ss as f64;
                    let d = Vector3::new((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0).normalize();
                    let along = c.dot(&d);
                    let dist2 = cc - along * along;
                    if dist2 < r2 {
                        sum += 2.0 * (r2 - dist2).sqrt();
                    }
                }
            }
            if sum > 0.0 {
                let (ux, uy) = (x as usize, y as usize);
                img.set(ux, uy, img.get(ux, uy) + mu * sum * inv);
            }
        }
    }
}
