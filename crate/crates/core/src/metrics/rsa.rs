use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::rank::{average_ranks, spearman_rho, Correlation};

/// Upper triangle (`i < j`, row-major) of the RDM with entries
/// `1 - spearman(x_i, x_j)`.
pub fn rdm_upper(x: &Matrix) -> Result<Vec<f64>> {
    if x.cols() < 2 {
        return Err(Error::DegenerateInput(format!(
            "RDM rows need at least 2 dimensions, got {}",
            x.cols()
        )));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("RSA input"));
    }
    // Rank each row once; the per-pair Spearman is then a Pearson of ranks.
    let ranked: Vec<(Vec<f64>, f64)> = x
        .iter_rows()
        .map(|row| {
            let r = average_ranks(row);
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            let c: Vec<f64> = r.iter().map(|v| v - mean).collect();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            (c, norm)
        })
        .collect();
    let m = x.rows();
    let mut out = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            let (a, na) = &ranked[i];
            let (b, nb) = &ranked[j];
            let rho = if *na == 0.0 || *nb == 0.0 {
                0.0
            } else {
                let r: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / (na * nb);
                r.clamp(-1.0, 1.0)
            };
            out.push(1.0 - rho);
        }
    }
    Ok(out)
}

/// Spearman correlation between the upper triangles of the two RDMs.
pub fn rsa_score(x: &Matrix, y: &Matrix) -> Result<Correlation> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    if x.rows() < 3 {
        return Err(Error::TooFewSentences(x.rows()));
    }
    spearman_rho(&rdm_upper(x)?, &rdm_upper(y)?)
}
