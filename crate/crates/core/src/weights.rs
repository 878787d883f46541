//! The coefficient multiset `a = (a_1, ..., a_n)` with rows in `R^d`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Coefficients of a weighted sum `S_a = sum_k X_k a_k`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct WeightVector {
    dim: usize,
    rows: Vec<f64>,
}

impl WeightVector {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| invalid("weights: at least one row is required"))?;
        if dim == 0 {
            return Err(invalid("weights: rows must have dimension >= 1"));
        }
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(invalid(format!(
                    "weights: row {k} has dimension {} but row 0 has {dim}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(dim, flat)
    }

    pub fn from_flat(dim: usize, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 || rows.is_empty() || !rows.len().is_multiple_of(dim) {
            return Err(invalid("weights: flat buffer does not match the dimension"));
        }
        if rows.iter().any(|x| !x.is_finite()) {
            return Err(invalid("weights: entries must be finite"));
        }
        if rows.iter().all(|&x| x == 0.0) {
            return Err(Error::Domain("weights: a must be nonzero".into()));
        }
        Ok(Self { dim, rows })
    }

    /// One-dimensional coefficients.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_flat(1, values.to_vec())
    }

    pub fn n(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.rows.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.rows
    }

    /// The coordinate vector `a^{(j)} = (a_{1j}, ..., a_{nj})`.
    pub fn coordinate(&self, j: usize) -> Result<Self> {
        if j >= self.dim {
            return Err(invalid(format!(
                "coordinate {j} out of range for d = {}",
                self.dim
            )));
        }
        Self::from_flat(1, self.rows().map(|r| r[j]).collect())
    }

    /// Euclidean norm `(sum_k ||a_k||^2)^{1/2}`.
    pub fn norm(&self) -> f64 {
        self.rows.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_row_norm(&self) -> f64 {
        self.rows()
            .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `A = sum_k a_k a_k^T`.
    pub fn matrix_a(&self) -> DMatrix<f64> {
        let d = self.dim;
        let mut a = DMatrix::<f64>::zeros(d, d);
        for row in self.rows() {
            for i in 0..d {
                for j in 0..d {
                    a[(i, j)] += row[i] * row[j];
                }
            }
        }
        a
    }

    /// Determinant of `A`, clamped at zero against round-off.
    pub fn det_a(&self) -> f64 {
        self.matrix_a().determinant().max(0.0)
    }

    /// Spectral norm of the `n x d` matrix with rows `a_k`, i.e. `sqrt(lambda_max(A))`.
    pub fn operator_norm(&self) -> f64 {
        let eig = self.matrix_a().symmetric_eigenvalues();
        eig.iter().cloned().fold(0.0, f64::max).max(0.0).sqrt()
    }

    /// Smallest nonzero absolute entry.
    pub fn min_nonzero_entry(&self) -> f64 {
        self.rows
            .iter()
            .map(|x| x.abs())
            .filter(|&x| x > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

impl TryFrom<Vec<Vec<f64>>> for WeightVector {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<WeightVector> for Vec<Vec<f64>> {
    fn from(w: WeightVector) -> Self {
        w.rows().map(<[f64]>::to_vec).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_and_ragged() {
        assert!(WeightVector::from_scalars(&[0.0, 0.0]).is_err());
        assert!(WeightVector::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
    }

    #[test]
    fn matrix_of_unit_rows_is_identity() {
        let a = WeightVector::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(a.matrix_a(), DMatrix::identity(2, 2));
        assert_eq!(a.det_a(), 1.0);
    }

    #[test]
    fn scalar_matrix_is_sum_of_squares() {
        let a = WeightVector::from_scalars(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(a.matrix_a()[(0, 0)], 14.0);
        assert!((a.operator_norm() - 14f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn coordinate_projection() {
        let a = WeightVector::new(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(a.coordinate(1).unwrap().as_flat(), &[2.0, 4.0]);
    }
}
