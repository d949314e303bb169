use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};

use super::clamp_to_range;

/// `R[i][j] = cos(x_i, y_j)`.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    values: Matrix,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }

    pub fn size(&self) -> usize {
        self.values.rows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.values
    }

    /// Index of the largest entry of row `i`; ties resolve to the lowest index.
    pub fn row_argmax(&self, i: usize) -> usize {
        argmax((0..self.size()).map(|k| self.get(i, k)))
    }

    /// Index of the largest entry of column `j`; ties resolve to the lowest index.
    pub fn col_argmax(&self, j: usize) -> usize {
        argmax((0..self.size()).map(|k| self.get(k, j)))
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, v) in values.enumerate() {
        if v > best.1 {
            best = (k, v);
        }
    }
    best.0
}

fn row_norms(m: &Matrix) -> Result<Vec<f64>> {
    m.iter_rows()
        .enumerate()
        .map(|(i, r)| {
            let n = norm(r);
            if n == 0.0 {
                Err(Error::ZeroNormRow(i))
            } else {
                Ok(n)
            }
        })
        .collect()
}

pub fn cosine_similarity_matrix(x: &Matrix, y: &Matrix) -> Result<SimilarityMatrix> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    let nx = row_norms(x)?;
    let ny = row_norms(y)?;
    let m = x.rows();
    let mut values = Matrix::zeros(m, m);
    for i in 0..m {
        let xi = x.row(i);
        let out = values.row_mut(i);
        for j in 0..m {
            let c = dot(xi, y.row(j)) / (nx[i] * ny[j]);
            out[j] = clamp_to_range(c, -1.0, 1.0, "cosine similarity")?;
        }
    }
    Ok(SimilarityMatrix { values })
}

/// Bidirectional retrieval precision: the fraction of rows whose nearest
/// neighbour in the other matrix (and vice versa) is the aligned row.
pub fn retrieval_precision(x: &Matrix, y: &Matrix) -> Result<f64> {
    let r = cosine_similarity_matrix(x, y)?;
    let m = r.size();
    let hits: usize = (0..m)
        .map(|i| usize::from(r.row_argmax(i) == i) + usize::from(r.col_argmax(i) == i))
        .sum();
    Ok(hits as f64 / (2 * m) as f64)
}
