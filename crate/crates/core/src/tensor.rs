//! Observation tensors with a missingness mask.

use std::collections::HashSet;

use ndarray::{Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{BtfError, Result};

/// One observed value in long format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongRecord {
    pub row: usize,
    pub col: usize,
    pub dose: usize,
    pub replicate: usize,
    pub value: f64,
}

impl From<(usize, usize, usize, usize, f64)> for LongRecord {
    fn from((row, col, dose, replicate, value): (usize, usize, usize, usize, f64)) -> Self {
        Self {
            row,
            col,
            dose,
            replicate,
            value,
        }
    }
}

/// An `N x M x T x R` array of noisy function evaluations.
///
/// Cells where `mask` is false carry no information and are never read by the
/// samplers.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTensor {
    values: Array4<f64>,
    mask: Array4<bool>,
}

/// Replicates observed at one `(row, col, dose)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedCell {
    pub row: usize,
    pub col: usize,
    pub dose: usize,
    pub values: Vec<f64>,
}

/// Observed cells grouped for row and column updates.
#[derive(Debug, Clone)]
pub struct CellIndex {
    pub cells: Vec<ObservedCell>,
    pub by_row: Vec<Vec<usize>>,
    pub by_col: Vec<Vec<usize>>,
    /// `pair_observed[i][j]` is true when any dose of `(i, j)` is observed.
    pub pair_observed: Vec<Vec<bool>>,
}

impl ObservationTensor {
    /// Builds a tensor from values and mask; masked-in values must be finite.
    pub fn new(values: Array4<f64>, mask: Array4<bool>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(BtfError::ShapeMismatch(format!(
                "values {:?} vs mask {:?}",
                values.shape(),
                mask.shape()
            )));
        }
        for ((idx, v), &m) in values.indexed_iter().zip(mask.iter()) {
            if m && !v.is_finite() {
                return Err(BtfError::NonFinite {
                    value: *v,
                    location: format!("{idx:?}"),
                });
            }
        }
        let mut values = values;
        values.zip_mut_with(&mask, |v, &m| {
            if !m {
                *v = 0.0;
            }
        });
        Ok(Self { values, mask })
    }

    /// Fully observed tensor.
    pub fn dense(values: Array4<f64>) -> Result<Self> {
        let mask = Array4::from_elem(values.raw_dim(), true);
        Self::new(values, mask)
    }

    /// Builds a tensor from `(row, col, dose, replicate, value)` records;
    /// dimensions are one past the largest index on each axis.
    pub fn from_long<I, T>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: Into<LongRecord>,
    {
        let records: Vec<LongRecord> = records.into_iter().map(Into::into).collect();
        if records.is_empty() {
            return Err(BtfError::InsufficientData("no observations".into()));
        }
        let mut seen = HashSet::with_capacity(records.len());
        let mut dims = [0usize; 4];
        for r in &records {
            if !seen.insert((r.row, r.col, r.dose, r.replicate)) {
                return Err(BtfError::DuplicateKey(r.row, r.col, r.dose, r.replicate));
            }
            if !r.value.is_finite() {
                return Err(BtfError::NonFinite {
                    value: r.value,
                    location: format!("({}, {}, {}, {})", r.row, r.col, r.dose, r.replicate),
                });
            }
            for (d, v) in dims.iter_mut().zip([r.row, r.col, r.dose, r.replicate]) {
                *d = (*d).max(v + 1);
            }
        }
        let mut values = Array4::zeros(dims);
        let mut mask = Array4::from_elem(dims, false);
        for r in &records {
            let key = [r.row, r.col, r.dose, r.replicate];
            values[key] = r.value;
            mask[key] = true;
        }
        Ok(Self { values, mask })
    }

    /// Observed cells in `(row, col, dose, replicate)` order.
    pub fn to_long(&self) -> Vec<LongRecord> {
        self.values
            .indexed_iter()
            .zip(self.mask.iter())
            .filter(|(_, &m)| m)
            .map(|(((row, col, dose, replicate), &value), _)| LongRecord {
                row,
                col,
                dose,
                replicate,
                value,
            })
            .collect()
    }

    /// `(N, M, T, R)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.values.shape();
        (s[0], s[1], s[2], s[3])
    }

    pub fn values(&self) -> &Array4<f64> {
        &self.values
    }

    pub fn mask(&self) -> &Array4<bool> {
        &self.mask
    }

    pub fn get(&self, i: usize, j: usize, t: usize, r: usize) -> Option<f64> {
        self.mask[[i, j, t, r]].then(|| self.values[[i, j, t, r]])
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Replicates observed at `(i, j, t)`.
    pub fn replicates(&self, i: usize, j: usize, t: usize) -> Vec<f64> {
        let (.., r) = self.dims();
        (0..r).filter_map(|rep| self.get(i, j, t, rep)).collect()
    }

    /// Copy with the given `(row, col)` pairs masked out on every dose and replicate.
    pub fn without_pairs(&self, pairs: &[(usize, usize)]) -> Self {
        let mut out = self.clone();
        for &(i, j) in pairs {
            out.mask
                .index_axis_mut(Axis(0), i)
                .index_axis_mut(Axis(0), j)
                .fill(false);
            out.values
                .index_axis_mut(Axis(0), i)
                .index_axis_mut(Axis(0), j)
                .fill(0.0);
        }
        out
    }

    /// Rejects tensors where some row or column has no observation.
    pub fn check_coverage(&self) -> Result<()> {
        let (n, m, ..) = self.dims();
        for i in 0..n {
            if !self.mask.index_axis(Axis(0), i).iter().any(|&x| x) {
                return Err(BtfError::Coverage(format!("row {i} has no observations")));
            }
        }
        for j in 0..m {
            if !self.mask.index_axis(Axis(1), j).iter().any(|&x| x) {
                return Err(BtfError::Coverage(format!("column {j} has no observations")));
            }
        }
        Ok(())
    }

    pub fn cell_index(&self) -> CellIndex {
        let (n, m, t_len, _) = self.dims();
        let mut cells = Vec::new();
        let mut by_row = vec![Vec::new(); n];
        let mut by_col = vec![Vec::new(); m];
        let mut pair_observed = vec![vec![false; m]; n];
        for i in 0..n {
            for j in 0..m {
                for t in 0..t_len {
                    let values = self.replicates(i, j, t);
                    if values.is_empty() {
                        continue;
                    }
                    let idx = cells.len();
                    by_row[i].push(idx);
                    by_col[j].push(idx);
                    pair_observed[i][j] = true;
                    cells.push(ObservedCell {
                        row: i,
                        col: j,
                        dose: t,
                        values,
                    });
                }
            }
        }
        CellIndex {
            cells,
            by_row,
            by_col,
            pair_observed,
        }
    }
}
