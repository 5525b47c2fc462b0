use super::{FiducialError, Image2D};

/// Default guard relative to the brightest marker-free sample.
pub const RELATIVE_EPSILON: f64 = 1e-15;

/// Guard added to both images before taking logarithms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubtractionConfig {
    epsilon: f64,
}

impl SubtractionConfig {
    pub fn new(epsilon: f64) -> Result<Self, FiducialError> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(FiducialError::InvalidConfig(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    /// `RELATIVE_EPSILON × max(without_marker)`, so the subtraction is
    /// unchanged when both exposures are scaled by the same gain.
    pub fn relative_to(without_marker: &Image2D) -> Self {
        let (_, max) = without_marker.min_max();
        let epsilon = (RELATIVE_EPSILON * max).max(f64::MIN_POSITIVE);
        Self { epsilon }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Logarithmic subtraction `ln(without + ε) − ln(with + ε)`.
///
/// Structures present in both acquisitions cancel; what remains is the line
/// integral of the attenuation added by the marker.
pub fn log_subtract(
    with_marker: &Image2D,
    without_marker: &Image2D,
    cfg: &SubtractionConfig,
) -> Result<Image2D, FiducialError> {
    if with_marker.width() != without_marker.width() || with_marker.height() != without_marker.height() {
        return Err(FiducialError::DimensionMismatch {
            left: (with_marker.width(), with_marker.height()),
            right: (without_marker.width(), without_marker.height()),
        });
    }
    with_marker.check_flux()?;
    without_marker.check_flux()?;
    let eps = cfg.epsilon;
    let data = with_marker
        .data()
        .iter()
        .zip(without_marker.data())
        .map(|(w, wo)| (wo + eps).ln() - (w + eps).ln())
        .collect();
    Image2D::new(with_marker.width(), with_marker.height(), data)
}
