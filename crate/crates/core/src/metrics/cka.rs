use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::clamp_to_range;

fn centered(m: &Matrix) -> DMatrix<f64> {
    let mut a = m.to_nalgebra();
    let n = a.nrows() as f64;
    for mut col in a.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    a
}

/// Linear CKA on column-centered inputs:
/// `||Y^T X||_F^2 / (||X^T X||_F * ||Y^T Y||_F)`.
///
/// Row counts must agree; column counts may differ.
pub fn linear_cka(x: &Matrix, y: &Matrix) -> Result<f64> {
    if x.rows() != y.rows() {
        return Err(Error::ShapeMismatch(format!("{} rows vs {} rows", x.rows(), y.rows())));
    }
    if x.rows() < 2 {
        return Err(Error::DegenerateInput(format!("CKA needs at least 2 rows, got {}", x.rows())));
    }
    let xc = centered(x);
    let yc = centered(y);
    if xc.iter().all(|v| *v == 0.0) || yc.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateInput("centered matrix is all zero".into()));
    }
    let cross = yc.transpose() * &xc;
    let xx = xc.transpose() * &xc;
    let yy = yc.transpose() * &yc;
    let num = cross.norm_squared();
    let den = xx.norm() * yy.norm();
    clamp_to_range(num / den, 0.0, 1.0, "linear CKA")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluated_example() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]).unwrap();
        let y = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 0.0]]).unwrap();
        let v = linear_cka(&x, &y).unwrap();
        assert!((v - 1.0 / 10f64.sqrt()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn identity_and_constant_offset() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 0.5], [0.0, 1.0, 3.0], [2.0, -1.0, 1.0], [0.3, 0.3, 0.1]])
            .unwrap();
        assert!((linear_cka(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_constant_columns() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        let y = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]]).unwrap();
        assert!(matches!(linear_cka(&x, &y), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn row_count_mismatch() {
        let x = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let y = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        assert!(matches!(linear_cka(&x, &y), Err(Error::ShapeMismatch(_))));
    }
}
