//! Mean / sample-standard-deviation tuples as printed in result tables.

use serde::Serialize;

use crate::textfmt;

/// Mean and sample standard deviation (n − 1 denominator). The deviation of
/// a single value is 0; an empty slice gives NaNs.
pub fn aggregate(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Per-target `(mean, std)` plus the pooled overall tuple.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricSummary {
    pub labels: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub overall: (f64, f64),
}

impl MetricSummary {
    pub fn from_groups(labels: Vec<String>, groups: &[Vec<f64>]) -> Self {
        assert_eq!(labels.len(), groups.len(), "one label per group");
        let (means, stds) = groups.iter().map(|g| aggregate(g)).unzip();
        let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
        Self {
            labels,
            means,
            stds,
            overall: aggregate(&pooled),
        }
    }

    pub fn tuple(&self, i: usize) -> String {
        textfmt::tuple(self.means[i], self.stds[i])
    }

    pub fn overall_tuple(&self) -> String {
        textfmt::tuple(self.overall.0, self.overall.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std_convention() {
        let (m, s) = aggregate(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-15);
        assert_eq!(aggregate(&[3.0]), (3.0, 0.0));
        assert!(aggregate(&[]).0.is_nan());
        assert_eq!(rms(&[3.0, 4.0]), (12.5f64).sqrt());
    }

    #[test]
    fn pooled_overall() {
        let s = MetricSummary::from_groups(vec!["a".into(), "b".into()], &[vec![1.0, 3.0], vec![5.0, 7.0]]);
        assert_eq!(s.means, vec![2.0, 6.0]);
        assert_eq!(s.overall.0, 4.0);
        assert_eq!(s.tuple(0), "(2.00, 1.41)");
    }
}
