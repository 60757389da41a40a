//! Per-dimension empirical CDFs and the projection into ECDF space.
//!
//! The projection maps each coordinate to the fraction of training values at
//! or below it. Distances between projected points then measure how much
//! probability mass lies between two observations, dimension by dimension.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{BiknnError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfModel {
    /// One non-decreasing array of training values per dimension.
    columns: Vec<Vec<f64>>,
    n: usize,
}

impl EcdfModel {
    pub fn fit(points: ArrayView2<'_, f64>) -> Result<Self> {
        let (n, d) = points.dim();
        if n == 0 || d == 0 {
            return Err(BiknnError::Empty("cannot fit an ECDF on no data"));
        }
        let columns = points
            .axis_iter(Axis(1))
            .map(|col| {
                let mut v = col.to_vec();
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        Ok(Self { columns, n })
    }

    /// Rebuild from stored sorted columns (e.g. a saved model).
    pub fn from_sorted_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(BiknnError::Empty("ECDF columns are empty"));
        }
        for col in &columns {
            if col.len() != n {
                return Err(BiknnError::DimensionMismatch {
                    expected: n,
                    actual: col.len(),
                });
            }
            if col
                .windows(2)
                .any(|w| w[0].partial_cmp(&w[1]).is_none_or(|o| o.is_gt()))
            {
                return Err(BiknnError::Model("ECDF column is not sorted".into()));
            }
        }
        Ok(Self { columns, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn sorted_column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Fraction of training values in dimension `j` that are `<= x`.
    pub fn ecdf_value(&self, j: usize, x: f64) -> Result<f64> {
        let col = self.columns.get(j).ok_or(BiknnError::DimensionMismatch {
            expected: self.dim(),
            actual: j + 1,
        })?;
        Ok(step(col, x, self.n))
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(BiknnError::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let mut out = vec![0.0; x.len()];
        self.project_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn project_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, col), &v) in out.iter_mut().zip(&self.columns).zip(x) {
            *o = step(col, v, self.n);
        }
    }
}

#[inline]
fn step(sorted: &[f64], x: f64, n: usize) -> f64 {
    sorted.partition_point(|&v| v <= x) as f64 / n as f64
}
