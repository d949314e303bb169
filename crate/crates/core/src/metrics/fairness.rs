use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairnessGap {
    /// Population variance of the per-language losses.
    pub variance: f64,
    /// Largest minus smallest per-language loss.
    pub max_gap: f64,
}

pub fn linguistic_fairness_gap(losses: &BTreeMap<String, f64>) -> Result<FairnessGap> {
    if losses.len() < 2 {
        return Err(Error::TooFewLanguages(losses.len()));
    }
    if losses.values().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("per-language losses"));
    }
    let n = losses.len() as f64;
    // Deviations from the first loss keep equal inputs at exactly zero variance.
    let first = *losses.values().next().expect("non-empty");
    let shifted: Vec<f64> = losses.values().map(|v| v - first).collect();
    let mean = shifted.iter().sum::<f64>() / n;
    let variance = shifted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let max = losses.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = losses.values().copied().fold(f64::INFINITY, f64::min);
    Ok(FairnessGap { variance, max_gap: max - min })
}
