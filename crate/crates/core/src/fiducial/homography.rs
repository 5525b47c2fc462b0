//! Four-point plane-to-image homography (normalized direct linear transform).

use nalgebra::{Matrix3, SMatrix, Vector2, Vector3};

/// Smallest accepted ratio between the second-smallest and largest singular
/// values of the DLT system; below it the correspondences are degenerate.
const RANK_TOLERANCE: f64 = 1e-10;

/// Maps `src[i]` onto `dst[i]` for the four correspondences.
///
/// Returns `None` when three points are collinear or the system is rank
/// deficient.
pub fn homography_4pt(src: &[Vector2<f64>; 4], dst: &[Vector2<f64>; 4]) -> Option<Matrix3<f64>> {
    let (ts, src_n) = normalize(src)?;
    let (td, dst_n) = normalize(dst)?;

    let mut a = SMatrix::<f64, 9, 9>::zeros();
    for i in 0..4 {
        let (x, y) = (src_n[i].x, src_n[i].y);
        let (u, v) = (dst_n[i].x, dst_n[i].y);
        let r0 = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u];
        let r1 = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v];
        for j in 0..9 {
            a[(2 * i, j)] = r0[j];
            a[(2 * i + 1, j)] = r1[j];
        }
    }
    // ninth row stays zero so the SVD exposes the full null space
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let sv = svd.singular_values;
    let (mut i_min, mut s_min) = (0, f64::INFINITY);
    for (i, s) in sv.iter().enumerate() {
        if *s < s_min {
            s_min = *s;
            i_min = i;
        }
    }
    let s_max = sv.max();
    let second = sv
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != i_min)
        .map(|(_, s)| *s)
        .fold(f64::INFINITY, f64::min);
    if !(s_max > 0.0) || second / s_max < RANK_TOLERANCE {
        return None;
    }
    let h = v_t.row(i_min);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse()?;
    let hm = td_inv * hn * ts;
    let scale = hm[(2, 2)];
    let hm = if scale.abs() > 1e-300 {
        hm / scale
    } else {
        hm / hm.norm()
    };
    hm.iter().all(|v| v.is_finite()).then_some(hm)
}

pub fn apply(h: &Matrix3<f64>, p: &Vector2<f64>) -> Option<Vector2<f64>> {
    let q = h * Vector3::new(p.x, p.y, 1.0);
    (q.z.abs() > 1e-300).then(|| Vector2::new(q.x / q.z, q.y / q.z))
}

// Hartley normalization: centroid to origin, mean distance √2.
fn normalize(pts: &[Vector2<f64>; 4]) -> Option<(Matrix3<f64>, [Vector2<f64>; 4])> {
    let c = pts.iter().fold(Vector2::zeros(), |acc, p| acc + p) / 4.0;
    let mean_dist = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / 4.0;
    if !(mean_dist > 0.0) || !mean_dist.is_finite() {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    let t = Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0);
    Some((t, pts.map(|p| (p - c) * s)))
}

/// Smallest |cross| over the four corner triangles, relative to the squared
/// mean edge length. Zero when any three corners are collinear.
pub fn collinearity_measure(pts: &[Vector2<f64>; 4]) -> f64 {
    let mut min_area = f64::INFINITY;
    for skip in 0..4 {
        let tri: Vec<_> = (0..4).filter(|i| *i != skip).map(|i| pts[i]).collect();
        let e1 = tri[1] - tri[0];
        let e2 = tri[2] - tri[0];
        min_area = min_area.min((e1.x * e2.y - e1.y * e2.x).abs());
    }
    let scale: f64 = (0..4).map(|i| (pts[(i + 1) % 4] - pts[i]).norm()).sum::<f64>() / 4.0;
    if scale > 0.0 {
        min_area / (scale * scale)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_correspondences() {
        let src = [
            Vector2::new(-0.5, 0.5),
            Vector2::new(-0.5, -0.5),
            Vector2::new(0.5, -0.5),
            Vector2::new(0.5, 0.5),
        ];
        let dst = [
            Vector2::new(100.0, 120.0),
            Vector2::new(110.0, 300.0),
            Vector2::new(320.0, 280.0),
            Vector2::new(290.0, 90.0),
        ];
        let h = homography_4pt(&src, &dst).unwrap();
        for i in 0..4 {
            assert!((apply(&h, &src[i]).unwrap() - dst[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn collinear_points_rejected() {
        let src = [
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(2.0, 0.0),
            Vector2::new(0.0, 1.0),
        ];
        let dst = [
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(2.0, 2.0),
            Vector2::new(3.0, 3.0),
        ];
        assert!(homography_4pt(&src, &dst).is_none());
        assert!(collinearity_measure(&dst) < 1e-12);
        assert!(collinearity_measure(&src) < 1e-12);
    }
}
