//! Banded symmetric matrices and their Cholesky factors.
//!
//! Every precision matrix in the model is banded: the trend-filtering prior on a
//! curve has bandwidth `k + 1`, and interleaving the `D` factor coordinates of a
//! curve (index `t * D + d`) keeps the column conditional banded with bandwidth
//! `(k + 1) * D`. A dense `D x D` matrix is the special case `bandwidth = D - 1`.

use crate::error::{BtfError, Result};

/// Symmetric matrix storing only the lower band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym {
    n: usize,
    bandwidth: usize,
    // row i holds A[i][i - k] at offset i * (bandwidth + 1) + k
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        let bandwidth = bandwidth.min(n.saturating_sub(1));
        Self {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn identity_scaled(n: usize, bandwidth: usize, diag: f64) -> Self {
        let mut m = Self::zeros(n, bandwidth);
        for i in 0..n {
            m.add(i, i, diag);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    fn offset(&self, i: usize, j: usize) -> Option<usize> {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let k = hi - lo;
        (k <= self.bandwidth).then(|| hi * (self.bandwidth + 1) + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.offset(i, j).map_or(0.0, |o| self.data[o])
    }

    /// Adds `value` to entries `(i, j)` and `(j, i)`.
    ///
    /// Panics when `(i, j)` lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let o = self
            .offset(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside bandwidth {}", self.bandwidth));
        self.data[o] += value;
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let n = a.len();
        let mut bandwidth = 0;
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate().take(i) {
                if v != 0.0 {
                    bandwidth = bandwidth.max(i - j);
                }
            }
        }
        let mut m = Self::zeros(n, bandwidth);
        for i in 0..n {
            for j in i.saturating_sub(bandwidth)..=i {
                m.add(i, j, a[i][j]);
            }
        }
        m
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            let hi = (i + self.bandwidth).min(self.n - 1);
            y[i] = (lo..=hi).map(|j| self.get(i, j) * x[j]).sum();
        }
        y
    }

    /// Cholesky factorization `A = L Lᵀ`; `name` identifies the matrix on failure.
    pub fn cholesky(&self, name: &str) -> Result<BandedCholesky> {
        let n = self.n;
        let p = self.bandwidth;
        let mut l = self.data.clone();
        let idx = |i: usize, j: usize| i * (p + 1) + (i - j);
        for j in 0..n {
            let k0 = j.saturating_sub(p);
            let mut s = l[idx(j, j)];
            for k in k0..j {
                let ljk = l[idx(j, k)];
                s -= ljk * ljk;
            }
            if !(s > 0.0) || !s.is_finite() {
                return Err(BtfError::NotPositiveDefinite {
                    name: name.to_string(),
                    pivot: j,
                    value: s,
                });
            }
            let d = s.sqrt();
            l[idx(j, j)] = d;
            for i in (j + 1)..(j + p + 1).min(n) {
                let k0 = i.saturating_sub(p);
                let mut s = l[idx(i, j)];
                for k in k0..j {
                    s -= l[idx(i, k)] * l[idx(j, k)];
                }
                l[idx(i, j)] = s / d;
            }
        }
        Ok(BandedCholesky {
            n,
            bandwidth: p,
            data: l,
        })
    }
}

/// Lower-triangular banded Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    #[inline]
    fn l(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.bandwidth + 1) + (i - j)]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L y = b` in place.
    pub fn solve_lower(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let mut s = b[i];
            for k in i.saturating_sub(self.bandwidth)..i {
                s -= self.l(i, k) * b[k];
            }
            b[i] = s / self.l(i, i);
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn solve_upper(&self, b: &mut [f64]) {
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in (i + 1)..(i + self.bandwidth + 1).min(self.n) {
                s -= self.l(k, i) * b[k];
            }
            b[i] = s / self.l(i, i);
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower(&mut x);
        self.solve_upper(&mut x);
        x
    }

    /// Computes `L z`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (i.saturating_sub(self.bandwidth)..=i)
                    .map(|k| self.l(i, k) * z[k])
                    .sum()
            })
            .collect()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l(i, i).ln()).sum::<f64>()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense inverse by Gauss-Jordan elimination with partial pivoting; test and
/// diagnostic use only.
pub fn dense_inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}
