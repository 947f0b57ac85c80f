//! Linear inequality constraints `D x ≥ γ`.
//!
//! Constraints on inner-product curves are described once by a
//! [`ConstraintKind`] as sparse rows over a curve `θ_1..θ_T`; the row and column
//! updates compose them with the linear map from a factor block to the curve.

use serde::{Deserialize, Serialize};

use crate::error::{BtfError, Result};
use crate::linalg::dot;

/// Dense constraint system `D x ≥ γ` over a latent vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    rows: Vec<Vec<f64>>,
    gamma: Vec<f64>,
    dim: usize,
}

impl ConstraintSet {
    pub fn new(rows: Vec<Vec<f64>>, gamma: Vec<f64>, dim: usize) -> Result<Self> {
        if rows.len() != gamma.len() {
            return Err(BtfError::ShapeMismatch(format!(
                "{} constraint rows but {} bounds",
                rows.len(),
                gamma.len()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(BtfError::ShapeMismatch(format!(
                "constraint row of length {} for dimension {dim}",
                r.len()
            )));
        }
        Ok(Self { rows, gamma, dim })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            rows: Vec::new(),
            gamma: Vec::new(),
            dim,
        }
    }

    /// Builds the set and verifies that `x` is feasible.
    pub fn for_point(rows: Vec<Vec<f64>>, gamma: Vec<f64>, x: &[f64]) -> Result<Self> {
        let set = Self::new(rows, gamma, x.len())?;
        set.check(x)?;
        Ok(set)
    }

    /// Constraints of `kind` applied directly to a curve of length `t_len`.
    pub fn for_curve(kind: &ConstraintKind, t_len: usize) -> Self {
        let mut rows = Vec::new();
        let mut gamma = Vec::new();
        for r in kind.curve_rows(t_len) {
            let mut row = vec![0.0; t_len];
            for &(t, c) in &r.coefs {
                row[t] += c;
            }
            rows.push(row);
            gamma.push(r.gamma);
        }
        Self {
            rows,
            gamma,
            dim: t_len,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.rows.iter().map(Vec::as_slice).zip(self.gamma.iter().copied())
    }

    pub fn is_satisfied(&self, x: &[f64]) -> bool {
        self.iter().all(|(d, g)| dot(d, x) >= g)
    }

    /// Largest violation `max(γ - d·x)`, or a non-positive slack when feasible.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.iter()
            .map(|(d, g)| g - dot(d, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(BtfError::ShapeMismatch(format!(
                "point of length {} for constraints of dimension {}",
                x.len(),
                self.dim
            )));
        }
        for (k, (d, g)) in self.iter().enumerate() {
            let lhs = dot(d, x);
            if !(lhs >= g) {
                return Err(BtfError::Infeasible(format!(
                    "constraint {k}: {lhs} < {g}"
                )));
            }
        }
        Ok(())
    }
}

/// Direction of a shape constraint along the dose grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monotone {
    Nonincreasing,
    Nondecreasing,
}

/// Which `(row, col)` pairs carry curve constraints during sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintScope {
    /// Only pairs with at least one observed cell.
    Observed,
    /// Every pair, so that held-out curves also stay feasible.
    #[default]
    All,
}

/// Role of a curve constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowRole {
    Lower,
    Upper,
    Order,
}

/// Sparse constraint row over a curve: `Σ c_t θ_t ≥ γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub coefs: Vec<(usize, f64)>,
    pub gamma: f64,
    pub role: RowRole,
}

impl CurveRow {
    pub fn eval(&self, curve: &[f64]) -> f64 {
        self.coefs.iter().map(|&(t, c)| c * curve[t]).sum()
    }
}

/// Bounds and monotonicity imposed on every inner-product curve.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintKind {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub monotone: Option<Monotone>,
}

impl ConstraintKind {
    pub fn none() -> Self {
        Self::default()
    }

    /// `θ ≥ 0`, e.g. Poisson rates.
    pub fn positive() -> Self {
        Self {
            lower: Some(0.0),
            ..Self::default()
        }
    }

    /// `0 ≤ θ ≤ 1`, optionally nonincreasing in dose.
    pub fn unit_interval(monotone: bool) -> Self {
        Self::bounded(0.0, 1.0, monotone)
    }

    /// `lo ≤ θ ≤ hi`, optionally nonincreasing in dose.
    pub fn bounded(lo: f64, hi: f64, monotone: bool) -> Self {
        Self {
            lower: Some(lo),
            upper: Some(hi),
            monotone: monotone.then_some(Monotone::Nonincreasing),
        }
    }

    pub fn is_active(&self) -> bool {
        self.lower.is_some() || self.upper.is_some() || self.monotone.is_some()
    }

    /// Sparse rows over a curve of length `t_len`.
    pub fn curve_rows(&self, t_len: usize) -> Vec<CurveRow> {
        let mut rows = Vec::new();
        for t in 0..t_len {
            if let Some(lo) = self.lower {
                rows.push(CurveRow {
                    coefs: vec![(t, 1.0)],
                    gamma: lo,
                    role: RowRole::Lower,
                });
            }
            if let Some(hi) = self.upper {
                rows.push(CurveRow {
                    coefs: vec![(t, -1.0)],
                    gamma: -hi,
                    role: RowRole::Upper,
                });
            }
        }
        if let Some(dir) = self.monotone {
            let s = match dir {
                Monotone::Nonincreasing => 1.0,
                Monotone::Nondecreasing => -1.0,
            };
            for t in 0..t_len.saturating_sub(1) {
                rows.push(CurveRow {
                    coefs: vec![(t, s), (t + 1, -s)],
                    gamma: 0.0,
                    role: RowRole::Order,
                });
            }
        }
        rows
    }

    /// Whether `curve` satisfies every row.
    pub fn curve_feasible(&self, curve: &[f64]) -> bool {
        self.curve_rows(curve.len())
            .iter()
            .all(|r| r.eval(curve) >= r.gamma)
    }

    /// Clamps each value into the bounds and projects onto the monotone cone.
    pub fn project_curve(&self, curve: &[f64]) -> Vec<f64> {
        let mut out = match self.monotone {
            Some(dir) => crate::samplers::pav::pav_monotone_projection(curve, dir)
                .unwrap_or_else(|_| curve.to_vec()),
            None => curve.to_vec(),
        };
        for v in out.iter_mut() {
            if let Some(lo) = self.lower {
                *v = v.max(lo);
            }
            if let Some(hi) = self.upper {
                *v = v.min(hi);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_rows_for_monotone_unit_interval() {
        let k = ConstraintKind::unit_interval(true);
        let rows = k.curve_rows(3);
        assert_eq!(rows.len(), 3 * 2 + 2);
        assert!(k.curve_feasible(&[0.9, 0.5, 0.5]));
        assert!(!k.curve_feasible(&[0.5, 0.9, 0.1]));
        assert!(!k.curve_feasible(&[1.1, 0.5, 0.1]));
    }

    #[test]
    fn dense_set_checks_points() {
        let set = ConstraintSet::for_curve(&ConstraintKind::bounded(0.1, 1.0, true), 3);
        assert!(set.is_satisfied(&[0.9, 0.5, 0.2]));
        assert!(set.check(&[0.9, 0.95, 0.2]).is_err());
        assert!(set.max_violation(&[0.9, 0.5, 0.2]) <= 0.0);
        assert!(ConstraintSet::for_point(set.rows().to_vec(), set.gamma().to_vec(), &[0.05, 0.0, 0.0]).is_err());
    }

    #[test]
    fn projection_is_feasible() {
        let k = ConstraintKind::unit_interval(true);
        let p = k.project_curve(&[0.2, 1.4, -0.3, 0.1]);
        assert!(k.curve_feasible(&p));
    }
}
