use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// `labels[t]` is set when normalized power moved by at least `threshold`
/// over the previous `window` steps. The first `window` steps are unlabeled
/// (false).
pub fn ramp_labels(power: &[f64], threshold: f64, window: usize) -> Result<Vec<bool>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param("threshold", format!("{threshold} outside (0, 1)")));
    }
    if window == 0 || window >= power.len() {
        return Err(Error::param("window", format!("{window} steps on a series of {}", power.len())));
    }
    Ok((0..power.len()).map(|t| t >= window && libm::fabs(power[t] - power[t - window]) >= threshold).collect())
}

/// Balanced weights `total / (2 * count)` for the positive and negative class.
pub fn class_weights(labels: &[bool]) -> Result<(f64, f64)> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InsufficientData(format!("{pos} positive and {neg} negative labels")));
    }
    let total = labels.len() as f64;
    Ok((total / (2.0 * pos as f64), total / (2.0 * neg as f64)))
}
