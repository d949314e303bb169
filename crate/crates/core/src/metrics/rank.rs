use crate::error::{Error, Result};

use super::clamp_to_range;

/// A correlation coefficient; `degenerate` marks a constant input for which
/// the coefficient is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub rho: f64,
    pub degenerate: bool,
}

/// 1-based ranks with ties assigned their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end (0-based) share rank mean(start+1..=end)
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::DegenerateInput(format!("correlation needs at least 2 values, got {}", a.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input"));
    }
    Ok(())
}

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<Correlation> {
    check_pair(a, b)?;
    let ca = centered(a);
    let cb = centered(b);
    let saa: f64 = ca.iter().map(|v| v * v).sum();
    let sbb: f64 = cb.iter().map(|v| v * v).sum();
    if saa == 0.0 || sbb == 0.0 {
        return Ok(Correlation { rho: 0.0, degenerate: true });
    }
    let sab: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
    let rho = clamp_to_range(sab / (saa * sbb).sqrt(), -1.0, 1.0, "correlation")?;
    Ok(Correlation { rho, degenerate: false })
}

/// Spearman's rank correlation with average ranks for ties.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<Correlation> {
    check_pair(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b))
}
