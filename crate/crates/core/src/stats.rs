//! Sampling statistics for injection campaigns.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("{name} must be in {range}, got {value}")]
    OutOfRange { name: &'static str, range: &'static str, value: f64 },
}

/// Two-sided standard-normal quantile for a confidence level, e.g. 0.95 -> 1.959964.
pub fn two_sided_z(confidence: f64) -> Result<f64, StatsError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::OutOfRange { name: "confidence", range: "(0, 1)", value: confidence });
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 + confidence / 2.0))
}

/// Injections needed so a proportion near `worst_p` is estimated within
/// `margin` at the given confidence: `ceil(z^2 p (1-p) / margin^2)`.
pub fn required_sample_size(margin: f64, confidence: f64, worst_p: f64) -> Result<u64, StatsError> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(StatsError::OutOfRange { name: "margin", range: "(0, 1)", value: margin });
    }
    if !(0.0..=1.0).contains(&worst_p) {
        return Err(StatsError::OutOfRange { name: "worst_p", range: "[0, 1]", value: worst_p });
    }
    let z = two_sided_z(confidence)?;
    let n = z * z * worst_p * (1.0 - worst_p) / (margin * margin);
    // Guard against 9604.000000001-style float noise pushing the ceiling up.
    Ok((n - 1e-9).ceil().max(0.0) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_and_invalid() {
        assert_eq!(required_sample_size(0.01, 0.95, 0.0), Ok(0));
        assert!(required_sample_size(0.0, 0.95, 0.5).is_err());
        assert!(required_sample_size(0.01, 1.0, 0.5).is_err());
        assert!(required_sample_size(0.01, 0.95, 1.5).is_err());
    }

    #[test]
    fn z_for_95_percent() {
        assert!((two_sided_z(0.95).unwrap() - 1.959964).abs() < 1e-6);
    }
}
