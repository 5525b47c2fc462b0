use nalgebra::{Vector2, Vector3};

use super::FiducialError;

/// Default printed side length of the marker, mm.
pub const DEFAULT_SIDE_MM: f64 = 100.0;

/// Half-width of the hollow interior, as a fraction of the side length.
/// The ink border is therefore a quarter of the side wide.
pub(crate) const HOLE_HALF: f64 = 0.25;
/// Orientation cell: the inner corner cell next to corner 0.
pub(crate) const CUE_MIN: f64 = 1.0 / 12.0;
/// Width of the white paper margin around the ink square (RGB only).
pub(crate) const PAPER_MARGIN: f64 = 0.25;

/// The planar two-modality marker.
///
/// Marker frame: origin at the pattern center, `+z` out of the printed face,
/// the pattern in `z = 0`. The ink (and, in X-ray, the metal inlay) is a
/// square border a quarter of the side wide plus one orientation cell in the
/// interior corner next to corner 0. Corners run counter-clockwise seen from
/// the front, starting at `(−s/2, +s/2, 0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkerModel {
    side_length: f64,
    pub pattern_id: u32,
}

impl Default for MarkerModel {
    fn default() -> Self {
        Self {
            side_length: DEFAULT_SIDE_MM,
            pattern_id: 0,
        }
    }
}

impl MarkerModel {
    pub fn new(side_length: f64, pattern_id: u32) -> Result<Self, FiducialError> {
        if !(side_length > 0.0) || !side_length.is_finite() {
            return Err(FiducialError::InvalidMarker(format!("side length {side_length}")));
        }
        Ok(Self {
            side_length,
            pattern_id,
        })
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    pub fn corner_points(&self) -> [Vector3<f64>; 4] {
        let h = self.side_length / 2.0;
        [
            Vector3::new(-h, h, 0.0),
            Vector3::new(-h, -h, 0.0),
            Vector3::new(h, -h, 0.0),
            Vector3::new(h, h, 0.0),
        ]
    }

    /// The ink pattern as signed quads in marker-plane coordinates (mm):
    /// coverage = Σ sign × area of each quad. Every quad is convex and wound
    /// like the corners.
    pub fn ink_quads(&self) -> [(f64, [Vector2<f64>; 4]); 3] {
        let s = self.side_length;
        [
            (1.0, square(0.0, 0.0, s / 2.0)),
            (-1.0, square(0.0, 0.0, s * HOLE_HALF)),
            (
                1.0,
                rect(-s * HOLE_HALF, -s * CUE_MIN, s * CUE_MIN, s * HOLE_HALF),
            ),
        ]
    }

    /// The printed sheet including its white margin.
    pub fn paper_quad(&self) -> [Vector2<f64>; 4] {
        square(0.0, 0.0, self.side_length * (0.5 + PAPER_MARGIN))
    }

    /// Samples (marker-plane, normalized by the side length) that must be
    /// ink on a genuine marker: the middle of each border strip.
    pub(crate) fn border_samples() -> [Vector2<f64>; 4] {
        let m = 0.5 * (0.5 + HOLE_HALF);
        [
            Vector2::new(0.0, m),
            Vector2::new(-m, 0.0),
            Vector2::new(0.0, -m),
            Vector2::new(m, 0.0),
        ]
    }

    /// Centers of the four interior corner cells, normalized; entry `i` is
    /// the cell next to corner `i`.
    pub(crate) fn cell_samples() -> [Vector2<f64>; 4] {
        let c = 0.5 * (CUE_MIN + HOLE_HALF);
        [
            Vector2::new(-c, c),
            Vector2::new(-c, -c),
            Vector2::new(c, -c),
            Vector2::new(c, c),
        ]
    }
}

fn square(cx: f64, cy: f64, half: f64) -> [Vector2<f64>; 4] {
    rect(cx - half, cx + half, cy - half, cy + half)
}

// Corner order: (xmin, ymax), (xmin, ymin), (xmax, ymin), (xmax, ymax).
fn rect(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> [Vector2<f64>; 4] {
    [
        Vector2::new(xmin, ymax),
        Vector2::new(xmin, ymin),
        Vector2::new(xmax, ymin),
        Vector2::new(xmax, ymax),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corners_are_coplanar_square() {
        let m = MarkerModel::new(80.0, 3).unwrap();
        let c = m.corner_points();
        for i in 0..4 {
            assert_eq!(c[i].z, 0.0);
            assert!(((c[(i + 1) % 4] - c[i]).norm() - 80.0).abs() < 1e-12);
        }
        assert_eq!(c[0], Vector3::new(-40.0, 40.0, 0.0));
        // counter-clockwise seen from +z
        let area: f64 = (0..4)
            .map(|i| c[i].x * c[(i + 1) % 4].y - c[(i + 1) % 4].x * c[i].y)
            .sum();
        assert!(area > 0.0);
    }

    #[test]
    fn ink_area() {
        let m = MarkerModel::default();
        let area = |q: &[Vector2<f64>; 4]| {
            0.5 * (0..4)
                .map(|i| q[i].x * q[(i + 1) % 4].y - q[(i + 1) % 4].x * q[i].y)
                .sum::<f64>()
        };
        let total: f64 = m.ink_quads().iter().map(|(s, q)| s * area(q)).sum();
        let s = m.side_length();
        let expected = s * s - (s / 2.0).powi(2) + (s / 6.0).powi(2);
        assert!((total - expected).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_side() {
        assert!(MarkerModel::new(0.0, 0).is_err());
        assert!(MarkerModel::new(f64::NAN, 0).is_err());
    }
}
