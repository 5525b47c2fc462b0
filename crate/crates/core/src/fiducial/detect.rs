//! Square-marker detection: threshold, connected components, quad screening,
//! orientation from the cue cell, then sub-pixel corners from edge lines.
//!
//! Sub-pixel edges use, per scanline across an edge, the centroid of the
//! central-difference profile. For an area-sampled straight step that
//! centroid lands exactly on the edge, so noiseless renderings yield corners
//! accurate to rounding.

use nalgebra::{Matrix2, Vector2};

use super::homography::{apply, homography_4pt};
use super::marker::MarkerModel;
use super::{FiducialError, Image2D};

const MIN_COMPONENT_PIXELS: usize = 64;
const MIN_SIDE_PX: f64 = 12.0;
const SCAN_HALF_WINDOW: i64 = 4;
const CORNER_MARGIN_PX: f64 = 8.0;

/// Whether the marker is darker or brighter than its surroundings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    /// RGB images and raw X-ray frames.
    DarkOnBright,
    /// Log-subtraction images.
    BrightOnDark,
}

/// Four detected marker corners in pixels, ordered like
/// [`MarkerModel::corner_points`].
#[derive(Clone, Debug, PartialEq)]
pub struct CornerObservation {
    pub corners: [Vector2<f64>; 4],
    pub source_view: String,
}

impl CornerObservation {
    /// Fails unless the corners form a strictly convex quadrilateral.
    pub fn new(corners: [Vector2<f64>; 4], source_view: impl Into<String>) -> Result<Self, FiducialError> {
        if !is_strictly_convex(&corners) {
            return Err(FiducialError::Degenerate(
                "corners do not form a convex quadrilateral".into(),
            ));
        }
        Ok(Self {
            corners,
            source_view: source_view.into(),
        })
    }

    /// Same corners with the ordering advanced by `k` positions.
    pub fn rotated(&self, k: usize) -> Self {
        let corners = std::array::from_fn(|i| self.corners[(i + k) % 4]);
        Self {
            corners,
            source_view: self.source_view.clone(),
        }
    }

    pub fn with_view(mut self, view: impl Into<String>) -> Self {
        self.source_view = view.into();
        self
    }
}

fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

pub(crate) fn signed_area(q: &[Vector2<f64>; 4]) -> f64 {
    0.5 * (0..4).map(|i| cross(&q[i], &q[(i + 1) % 4])).sum::<f64>()
}

fn is_strictly_convex(q: &[Vector2<f64>; 4]) -> bool {
    if q.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return false;
    }
    let turns: Vec<f64> = (0..4)
        .map(|i| {
            let a = q[(i + 1) % 4] - q[i];
            let b = q[(i + 2) % 4] - q[(i + 1) % 4];
            cross(&a, &b)
        })
        .collect();
    turns.iter().all(|t| *t > 0.0) || turns.iter().all(|t| *t < 0.0)
}

/// Finds the single marker in `img` and returns its corners.
pub fn detect_corners(img: &Image2D, polarity: Polarity) -> Result<CornerObservation, FiducialError> {
    let (lo, hi) = img.min_max();
    let range = hi - lo;
    if !(range > 1e-12 * hi.abs().max(1.0)) {
        return Err(FiducialError::NotFound);
    }
    let fg = match polarity {
        Polarity::BrightOnDark => img.map(|v| v - lo),
        Polarity::DarkOnBright => img.map(|v| hi - v),
    };
    let threshold = 0.5 * range;

    let mut found = Vec::new();
    for comp in components(&fg, threshold) {
        if let Some(quad) = screen_component(&fg, &comp, threshold) {
            found.push(quad);
        }
    }
    let rough = match found.len() {
        0 => return Err(FiducialError::NotFound),
        1 => found.pop().expect("one candidate"),
        n => return Err(FiducialError::Ambiguous(n)),
    };

    let mut corners = rough;
    for _ in 0..2 {
        corners = refine_corners(&fg, &corners, range).ok_or(FiducialError::NotFound)?;
    }
    CornerObservation::new(corners, "").map_err(|_| FiducialError::NotFound)
}

struct Component {
    pixels: usize,
    centroid: Vector2<f64>,
    // per-row extreme pixels, the only candidates for hull vertices
    extremes: Vec<Vector2<f64>>,
}

fn components(fg: &Image2D, threshold: f64) -> Vec<Component> {
    let (w, h) = (fg.width(), fg.height());
    let mask: Vec<bool> = fg.data().iter().map(|v| *v > threshold).collect();
    let mut label = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask[start] || label[start] {
            continue;
        }
        label[start] = true;
        stack.push(start);
        let mut count = 0usize;
        let mut sum = Vector2::zeros();
        let mut rows: std::collections::BTreeMap<usize, (usize, usize)> = Default::default();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            count += 1;
            sum += Vector2::new(x as f64, y as f64);
            let e = rows.entry(y).or_insert((x, x));
            e.0 = e.0.min(x);
            e.1 = e.1.max(x);
            let mut visit = |j: usize| {
                if mask[j] && !label[j] {
                    label[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if count < MIN_COMPONENT_PIXELS {
            continue;
        }
        let mut extremes = Vec::with_capacity(rows.len() * 2);
        for (y, (x0, x1)) in rows {
            extremes.push(Vector2::new(x0 as f64, y as f64));
            if x1 != x0 {
                extremes.push(Vector2::new(x1 as f64, y as f64));
            }
        }
        out.push(Component {
            pixels: count,
            centroid: sum / count as f64,
            extremes,
        });
    }
    out
}

// Andrew's monotone chain; counter-clockwise in (x right, y down) coordinates
// means negative signed area.
fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vector2<f64>>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if cross(&(b - a), &(p - a)) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Rough corners of a component if it looks like a marker, ordered from the
/// cue corner with the marker's winding.
fn screen_component(fg: &Image2D, comp: &Component, threshold: f64) -> Option<[Vector2<f64>; 4]> {
    let hull = convex_hull(&comp.extremes);
    if hull.len() < 4 {
        return None;
    }
    let far = |from: &Vector2<f64>| {
        hull.iter()
            .copied()
            .max_by(|a, b| (a - from).norm_squared().total_cmp(&(b - from).norm_squared()))
            .expect("non-empty hull")
    };
    let c0 = far(&comp.centroid);
    let c2 = far(&c0);
    let axis = c2 - c0;
    if axis.norm() < MIN_SIDE_PX {
        return None;
    }
    let side = |p: &Vector2<f64>| cross(&axis, &(p - c0)) / axis.norm();
    let c1 = hull.iter().copied().max_by(|a, b| side(a).total_cmp(&side(b)))?;
    let c3 = hull.iter().copied().min_by(|a, b| side(a).total_cmp(&side(b)))?;
    if side(&c1) < MIN_SIDE_PX / 2.0 || -side(&c3) < MIN_SIDE_PX / 2.0 {
        return None;
    }
    let mut quad = [c0, c1, c2, c3];
    if signed_area(&quad) > 0.0 {
        quad = [c0, c3, c2, c1];
    }
    let sides: Vec<f64> = (0..4).map(|i| (quad[(i + 1) % 4] - quad[i]).norm()).collect();
    let mean_side = sides.iter().sum::<f64>() / 4.0;
    if sides.iter().any(|s| *s < MIN_SIDE_PX) || !is_strictly_convex(&quad) {
        return None;
    }

    // every hull vertex must hug the quad
    let tolerance = (0.02 * mean_side).max(2.0);
    for p in &hull {
        for i in 0..4 {
            let a = quad[i];
            let e = quad[(i + 1) % 4] - a;
            // the quad has negative area: the interior lies where the cross
            // product with each edge is negative
            let outward = cross(&e, &(p - a)) / e.norm();
            if outward > tolerance {
                return None;
            }
        }
    }
    // the border covers 3/4 of the area; a filled blob or a thin outline does not
    let fill = comp.pixels as f64 / (-signed_area(&quad));
    if !(0.5..=0.95).contains(&fill) {
        return None;
    }

    orient(fg, &quad, threshold)
}

fn orient(fg: &Image2D, quad: &[Vector2<f64>; 4], threshold: f64) -> Option<[Vector2<f64>; 4]> {
    let unit = MarkerModel::new(1.0, 0).expect("unit marker");
    let model: [Vector2<f64>; 4] = unit.corner_points().map(|c| c.xy());
    let h = homography_4pt(&model, quad)?;
    let is_ink = |p: Vector2<f64>| -> Option<bool> {
        let q = apply(&h, &p)?;
        Some(fg.sample(q.x, q.y)? > threshold)
    };
    for p in MarkerModel::border_samples() {
        if !is_ink(p)? {
            return None;
        }
    }
    if is_ink(Vector2::zeros())? {
        return None;
    }
    let mut cue = None;
    for (i, p) in MarkerModel::cell_samples().into_iter().enumerate() {
        if is_ink(p)? {
            if cue.is_some() {
                return None;
            }
            cue = Some(i);
        }
    }
    let k = cue?;
    Some(std::array::from_fn(|i| quad[(i + k) % 4]))
}

struct Line {
    point: Vector2<f64>,
    direction: Vector2<f64>,
}

fn refine_corners(fg: &Image2D, rough: &[Vector2<f64>; 4], range: f64) -> Option<[Vector2<f64>; 4]> {
    let mut lines = Vec::with_capacity(4);
    for i in 0..4 {
        let pts = edge_crossings(fg, &rough[i], &rough[(i + 1) % 4], range);
        lines.push(fit_line(&pts)?);
    }
    let mut out = [Vector2::zeros(); 4];
    for i in 0..4 {
        out[i] = intersect(&lines[(i + 3) % 4], &lines[i])?;
    }
    let drift = (0..4).map(|i| (out[i] - rough[i]).norm()).fold(0.0, f64::max);
    (drift < 5.0).then_some(out)
}

/// Sub-pixel crossings of the edge `a → b`, one per scanline, with weights.
fn edge_crossings(fg: &Image2D, a: &Vector2<f64>, b: &Vector2<f64>, range: f64) -> Vec<(Vector2<f64>, f64)> {
    let d = b - a;
    let along_x = d.x.abs() >= d.y.abs();
    let (s0, s1, c0, c1) = if along_x {
        (a.x, b.x, a.y, b.y)
    } else {
        (a.y, b.y, a.x, b.x)
    };
    let span = (s1 - s0).abs();
    let margin = CORNER_MARGIN_PX.max(0.1 * span);
    let lo = (s0.min(s1) + margin).ceil() as i64;
    let hi = (s0.max(s1) - margin).floor() as i64;
    let value = |s: i64, c: i64| if along_x { fg.at(s, c) } else { fg.at(c, s) };

    let mut out = Vec::new();
    'scan: for s in lo..=hi {
        let t = (s as f64 - s0) / (s1 - s0);
        let center = (c0 + t * (c1 - c0)).round() as i64;
        let (mut sum, mut moment) = (0.0, 0.0);
        for c in center - SCAN_HALF_WINDOW..=center + SCAN_HALF_WINDOW {
            let (Some(next), Some(prev)) = (value(s, c + 1), value(s, c - 1)) else {
                continue 'scan;
            };
            let diff = next - prev;
            sum += diff;
            moment += c as f64 * diff;
        }
        if sum.abs() < 0.5 * range {
            continue;
        }
        let c = moment / sum;
        let p = if along_x {
            Vector2::new(s as f64, c)
        } else {
            Vector2::new(c, s as f64)
        };
        out.push((p, sum.abs()));
    }
    out
}

/// Weighted total-least-squares line.
fn fit_line(pts: &[(Vector2<f64>, f64)]) -> Option<Line> {
    if pts.len() < 3 {
        return None;
    }
    let wsum: f64 = pts.iter().map(|(_, w)| w).sum();
    let mean = pts.iter().fold(Vector2::zeros(), |acc, (p, w)| acc + p * *w) / wsum;
    let mut cov = Matrix2::zeros();
    for (p, w) in pts {
        let d = p - mean;
        cov += d * d.transpose() * *w;
    }
    let eig = cov.symmetric_eigen();
    let i = if eig.eigenvalues[0] >= eig.eigenvalues[1] {
        0
    } else {
        1
    };
    let direction = eig.eigenvectors.column(i).into_owned();
    Some(Line {
        point: mean,
        direction,
    })
}

fn intersect(l1: &Line, l2: &Line) -> Option<Vector2<f64>> {
    let denom = cross(&l1.direction, &l2.direction);
    if denom.abs() < 1e-9 {
        return None;
    }
    let t = cross(&(l2.point - l1.point), &l2.direction) / denom;
    Some(l1.point + l1.direction * t)
}
