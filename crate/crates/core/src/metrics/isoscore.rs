//! IsoScore: how uniformly a point cloud spreads its variance over the
//! ambient dimensions (1 = isotropic, 0 = a single direction).

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::clamp_to_range;

/// Population covariance of the rows of `x`.
fn covariance(x: &Matrix) -> DMatrix<f64> {
    let (n_points, n_dims) = x.shape();
    let mut mean = vec![0.0; n_dims];
    for row in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n_points as f64);
    let mut cov = DMatrix::<f64>::zeros(n_dims, n_dims);
    let mut centered = vec![0.0; n_dims];
    for row in x.iter_rows() {
        for ((c, v), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = v - m;
        }
        for a in 0..n_dims {
            for b in a..n_dims {
                cov[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    for a in 0..n_dims {
        for b in a..n_dims {
            let v = cov[(a, b)] / n_points as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov
}

pub fn isoscore(x: &Matrix) -> Result<f64> {
    let (n_points, n_dims) = x.shape();
    if n_dims < 2 {
        return Err(Error::DimensionTooSmall(n_dims));
    }
    if n_points < 2 {
        return Err(Error::DegenerateInput(format!("IsoScore needs at least 2 points, got {n_points}")));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("IsoScore input"));
    }

    // Variances along the principal axes are the covariance eigenvalues.
    let variances: Vec<f64> = SymmetricEigen::new(covariance(x))
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    let total = variances.iter().map(|v| v * v).sum::<f64>().sqrt();
    if total == 0.0 {
        return Err(Error::DegenerateInput("point cloud has zero variance".into()));
    }

    let n = n_dims as f64;
    let sqrt_n = n.sqrt();
    let defect = variances
        .iter()
        .map(|v| {
            let d = sqrt_n * v / total - 1.0;
            d * d
        })
        .sum::<f64>()
        .sqrt()
        / (2.0 * (n - sqrt_n)).sqrt();
    let occupied = (n - defect * defect * (n - sqrt_n)).powi(2) / (n * n);
    let iota = (n * occupied - 1.0) / (n - 1.0);
    clamp_to_range(iota, 0.0, 1.0, "IsoScore")
}
