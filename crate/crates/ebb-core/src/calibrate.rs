//! Vote-threshold calibration toward a target true positive rate.
//!
//! For each grid value, every positive training row gets the median of
//! its out-of-bag scores across that value's replicates. Lowering a
//! grid value's vote threshold below zero turns borderline negatives
//! into positive votes; setting it to the c-th largest positive median,
//! with `c = ceil(rate * count)`, makes at least that share of the
//! scored positives clear the bar. Thresholds never rise above zero, so
//! a zero target leaves the plain ensemble untouched.

use crate::dataset::Features;
use crate::ensemble::EnsembleBank;
use crate::error::{Error, Result};

/// Median with the even-count midpoint convention.
fn median_of(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// The count that "at least a `rate` share of `total`" requires.
/// Floating error on an exactly integral product must not push the
/// ceiling up one, so near-integers round instead.
pub(crate) fn required_count(rate: f64, total: usize) -> usize {
    let product = rate * total as f64;
    if (product - product.round()).abs() < 1e-9 {
        product.round() as usize
    } else {
        product.ceil() as usize
    }
}

/// Threshold that lets at least `ceil(target_rate * n)` of the `n`
/// medians score at or above it, never above zero. A zero target is
/// exactly the uncalibrated threshold.
pub fn threshold_from_medians(medians: &[f64], target_rate: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&target_rate) || !target_rate.is_finite() {
        return Err(Error::invalid(
            "target_rate",
            format!("{target_rate} outside [0, 1]"),
        ));
    }
    if medians.iter().any(|m| !m.is_finite()) {
        return Err(Error::NonFinite {
            context: "score medians".into(),
        });
    }
    if target_rate == 0.0 {
        return Ok(0.0);
    }
    if medians.is_empty() {
        return Err(Error::TooFewRows {
            context: "threshold calibration".into(),
            needed: 1,
            got: 0,
        });
    }
    let c = required_count(target_rate, medians.len()).max(1);
    let mut sorted = medians.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(sorted[c - 1].min(0.0))
}

/// Per-positive-row medians of out-of-bag scores under grid value
/// `grid_index`. Rows that never land out of bag carry no estimate and
/// are skipped.
pub fn positive_oob_medians(
    bank: &EnsembleBank,
    features: &Features,
    labels: &[i8],
    grid_index: usize,
) -> Vec<f64> {
    let mut per_row: Vec<Vec<f64>> = vec![Vec::new(); features.len()];
    for replicate in &bank.replicates[grid_index] {
        let model = match &replicate.model {
            Some(m) => m,
            None => continue,
        };
        for &r in &replicate.oob_rows {
            if labels[r] == 1 {
                per_row[r].push(model.score(features.row(r)));
            }
        }
    }
    per_row
        .into_iter()
        .filter(|scores| !scores.is_empty())
        .map(median_of)
        .collect()
}

/// One calibrated vote threshold per grid value.
pub fn calibrate_thresholds(
    bank: &EnsembleBank,
    features: &Features,
    labels: &[i8],
    target_rate: f64,
) -> Result<Vec<f64>> {
    if labels.len() != features.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} rows, {} labels",
            features.len(),
            labels.len()
        )));
    }
    (0..bank.grid.len())
        .map(|j| {
            let medians = positive_oob_medians(bank, features, labels, j);
            if target_rate == 0.0 {
                // Zero target never needs medians; stay uncalibrated.
                Ok(0.0)
            } else {
                threshold_from_medians(&medians, target_rate)
            }
        })
        .collect()
}
