//! Error metrics of estimates against simulated ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chemistry::SpeciesKey;

/// `Σ |count − α| / n_precursors` over the union of species keys; missing
/// keys count as zero.
pub fn deconvolution_error(
    truth: &BTreeMap<SpeciesKey, u64>,
    estimate: &BTreeMap<SpeciesKey, f64>,
    n_precursors: u64,
) -> f64 {
    let mut total = 0.0;
    for (k, &count) in truth {
        total += (count as f64 - estimate.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &a) in estimate {
        if !truth.contains_key(k) {
            total += a.abs();
        }
    }
    total / n_precursors.max(1) as f64
}

/// Which reaction an estimate overstates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Ptr,
    Etnod,
    Balanced,
}

/// Euclidean distance between `(p_ETnoD, p_PTR)` vectors divided by √2,
/// and the reaction favored by the estimate.
pub fn probability_error(truth: (f64, f64), estimate: (f64, f64)) -> (f64, Direction) {
    let d = ((estimate.0 - truth.0).powi(2) + (estimate.1 - truth.1).powi(2)).sqrt()
        / std::f64::consts::SQRT_2;
    let diff = estimate.0 - truth.0;
    let dir = if diff > 0.0 {
        Direction::Etnod
    } else if diff < 0.0 {
        Direction::Ptr
    } else {
        Direction::Balanced
    };
    (d, dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub deconvolution_error: f64,
    pub probability_error: Option<f64>,
    pub favored_reaction: Option<Direction>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemistry::FragmentKind;

    #[test]
    fn deconvolution_metric() {
        let a = SpeciesKey::precursor(3, 0);
        let b = SpeciesKey::fragment(FragmentKind::C, 5, 1, 0);
        let truth = BTreeMap::from([(a, 100)]);
        assert_eq!(deconvolution_error(&truth, &BTreeMap::from([(a, 100.0)]), 10), 0.0);
        assert!((deconvolution_error(&truth, &BTreeMap::from([(a, 90.0)]), 1000) - 0.01).abs() < 1e-15);
        assert_eq!(deconvolution_error(&truth, &BTreeMap::from([(b, 100.0)]), 100), 2.0);
    }

    #[test]
    fn probability_metric() {
        assert_eq!(probability_error((0.4, 0.6), (0.4, 0.6)), (0.0, Direction::Balanced));
        let (d, dir) = probability_error((0.0, 1.0), (1.0, 0.0));
        assert!((d - 1.0).abs() < 1e-15);
        assert_eq!(dir, Direction::Etnod);
        let (d, dir) = probability_error((0.3, 0.7), (0.4, 0.6));
        assert!((d - 0.1).abs() < 1e-12);
        assert_eq!(dir, Direction::Etnod);
        let (d2, dir2) = probability_error((0.4, 0.6), (0.3, 0.7));
        assert_eq!(d, d2);
        assert_eq!(dir2, Direction::Ptr);
    }
}
