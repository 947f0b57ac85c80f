//! Composite trend-filtering difference matrices and the curve prior precision.
//!
//! The composite matrix stacks an anchor row `e₁ᵀ` on top of the difference
//! operators of every order `1..=k+1`. With independent variances `ρ²τ²_ℓ` on
//! its rows, the curve prior has precision `Δᵀ diag(1/(ρ²τ²)) Δ`.

use serde::{Deserialize, Serialize};

use crate::error::{BtfError, Result};
use crate::linalg::BandedSym;

/// One sparse row of the composite difference matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    pub start: usize,
    pub coefs: Vec<f64>,
}

impl DiffRow {
    pub fn apply(&self, x: &[f64]) -> f64 {
        self.coefs
            .iter()
            .enumerate()
            .map(|(m, c)| c * x[self.start + m])
            .sum()
    }
}

/// Stacked anchor + difference operators of orders `1..=k+1` over a grid of `T` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeDiffMatrix {
    rows: Vec<DiffRow>,
    order: usize,
    grid_len: usize,
}

/// Alternating binomial coefficients of order `q`: `(-1)^m C(q, m)`.
fn difference_stencil(q: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for _ in 0..q {
        let mut next = vec![0.0; c.len() + 1];
        for (m, &v) in c.iter().enumerate() {
            next[m] += v;
            next[m + 1] -= v;
        }
        c = next;
    }
    c
}

impl CompositeDiffMatrix {
    /// Builds `Δ^(k)` for a grid of `t_len` points; requires `t_len ≥ k + 2`.
    pub fn new(t_len: usize, k: usize) -> Result<Self> {
        if t_len < k + 2 {
            return Err(BtfError::InvalidArgument(format!(
                "trend order k = {k} needs at least {} grid points, got {t_len}",
                k + 2
            )));
        }
        let mut rows = vec![DiffRow {
            start: 0,
            coefs: vec![1.0],
        }];
        for q in 1..=k + 1 {
            let stencil = difference_stencil(q);
            for start in 0..t_len - q {
                rows.push(DiffRow {
                    start,
                    coefs: stencil.clone(),
                });
            }
        }
        Ok(Self {
            rows,
            order: k,
            grid_len: t_len,
        })
    }

    /// Number of rows `L = 1 + Σ_{q=1}^{k+1} (T - q)`.
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn rows(&self) -> &[DiffRow] {
        &self.rows
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![0.0; self.grid_len];
                for (m, c) in r.coefs.iter().enumerate() {
                    row[r.start + m] = *c;
                }
                row
            })
            .collect()
    }

    /// `Δ x` for a single curve.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.apply(x)).collect()
    }

    /// Squared norms `‖(Δ V)_ℓ‖²` of every difference row for a dose-major
    /// curve `vec(V)` with `dim` factor coordinates.
    pub fn row_norms_sq(&self, curve: &[f64], dim: usize) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| {
                (0..dim)
                    .map(|d| {
                        let s: f64 = r
                            .coefs
                            .iter()
                            .enumerate()
                            .map(|(m, c)| c * curve[(r.start + m) * dim + d])
                            .sum();
                        s * s
                    })
                    .sum()
            })
            .collect()
    }

    /// Prior precision `Δᵀ diag(1/(ρ² τ²)) Δ`, banded with bandwidth `k + 1`.
    pub fn prior_precision(&self, rho2: f64, tau2: &[f64]) -> Result<BandedSym> {
        if !(rho2 > 0.0) {
            return Err(BtfError::InvalidArgument(format!("rho2 = {rho2} must be positive")));
        }
        if tau2.len() != self.rows.len() {
            return Err(BtfError::ShapeMismatch(format!(
                "{} local scales for {} difference rows",
                tau2.len(),
                self.rows.len()
            )));
        }
        if let Some(bad) = tau2.iter().find(|&&x| !(x > 0.0)) {
            return Err(BtfError::InvalidArgument(format!(
                "local variance {bad} must be positive"
            )));
        }
        let mut p = BandedSym::zeros(self.grid_len, self.order + 1);
        for (r, &t2) in self.rows.iter().zip(tau2) {
            let w = 1.0 / (rho2 * t2);
            for (a, ca) in r.coefs.iter().enumerate() {
                for (b, cb) in r.coefs.iter().enumerate().take(a + 1) {
                    p.add(r.start + a, r.start + b, w * ca * cb);
                }
            }
        }
        Ok(p)
    }
}

/// Free-function form of [`CompositeDiffMatrix::new`].
pub fn build_composite_tf_matrix(t_len: usize, k: usize) -> Result<CompositeDiffMatrix> {
    CompositeDiffMatrix::new(t_len, k)
}

/// Free-function form of [`CompositeDiffMatrix::prior_precision`].
pub fn build_prior_precision(
    delta: &CompositeDiffMatrix,
    rho2: f64,
    tau2: &[f64],
) -> Result<BandedSym> {
    delta.prior_precision(rho2, tau2)
}
