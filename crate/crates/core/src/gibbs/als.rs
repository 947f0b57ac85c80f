//! Constrained alternating least-absolute-deviation factorization.
//!
//! Rows and columns are refit in turn, each subproblem a linear program that
//! minimises the replicate-weighted absolute deviation between cell means and
//! `⟨w_i, v_jt⟩` subject to the curve constraints. The fit seeds the sampler
//! with a feasible state and defines the Gaussian pseudo-observations used to
//! shape the slice-sampling ellipses.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use ndarray::{Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintKind, ConstraintScope, CurveRow, RowRole};
use crate::error::{BtfError, Result};
use crate::model::FactorState;
use crate::tensor::{CellIndex, ObservationTensor};

/// Gaussian surrogate of the likelihood built from the ALS fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoEpApprox {
    pub pseudo_obs: Array3<f64>,
    pub pseudo_var: Array3<f64>,
    pub inflation: f64,
    /// Factors of the fit; feasible for the constraints it was built with.
    pub factors: FactorState,
    pub iterations: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlsConfig {
    pub d: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub inflation: f64,
    pub var_floor: f64,
    pub scope: ConstraintScope,
    /// Slack kept from bound constraints so the start is strictly feasible.
    pub bound_margin: f64,
    /// Slack kept on monotonicity constraints.
    pub order_margin: f64,
}

impl AlsConfig {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            max_iters: 50,
            rel_tol: 1e-4,
            inflation: 2.0,
            var_floor: 1e-4,
            scope: ConstraintScope::All,
            bound_margin: 1e-6,
            order_margin: 1e-8,
        }
    }
}

fn margin_for(row: &CurveRow, cfg: &AlsConfig) -> f64 {
    match row.role {
        RowRole::Lower | RowRole::Upper => cfg.bound_margin,
        RowRole::Order => cfg.order_margin,
    }
}

/// Pairs `(i, j)` whose curves carry constraints.
pub fn scoped_pairs(index: &CellIndex, kind: &ConstraintKind, scope: ConstraintScope) -> Vec<Vec<bool>> {
    let n = index.pair_observed.len();
    let m = index.pair_observed.first().map_or(0, Vec::len);
    match (kind.is_active(), scope) {
        (true, ConstraintScope::All) => vec![vec![true; m]; n],
        _ => index.pair_observed.clone(),
    }
}

/// A feasible starting point: `W = 1` and columns spread over the factor
/// coordinates so that every row sees the projected column-mean curve.
fn feasible_start<R: Rng + ?Sized>(
    y: &ObservationTensor,
    index: &CellIndex,
    kind: &ConstraintKind,
    d: usize,
    rng: &mut R,
) -> FactorState {
    let (n, m, t_len, _) = y.dims();
    let width = match (kind.lower, kind.upper) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => 1.0,
    };
    let inset = 1e-3 * width;
    let ramp = (1e-6f64).min(inset / (2.0 * t_len as f64));
    let mut v = Array3::zeros((m, t_len, d));
    for j in 0..m {
        let mut sums = vec![0.0; t_len];
        let mut counts = vec![0usize; t_len];
        for &k in &index.by_col[j] {
            let c = &index.cells[k];
            sums[c.dose] += c.values.iter().sum::<f64>();
            counts[c.dose] += c.values.len();
        }
        let overall = sums.iter().sum::<f64>() / counts.iter().sum::<usize>().max(1) as f64;
        let raw: Vec<f64> = (0..t_len)
            .map(|t| if counts[t] > 0 { sums[t] / counts[t] as f64 } else { overall })
            .collect();
        let mut curve = kind.project_curve(&raw);
        for (t, c) in curve.iter_mut().enumerate() {
            if let Some(lo) = kind.lower {
                *c = c.max(lo + inset);
            }
            if let Some(hi) = kind.upper {
                *c = c.min(hi - inset);
            }
            *c += match kind.monotone {
                Some(crate::constraints::Monotone::Nonincreasing) => ramp * (t_len - 1 - t) as f64,
                Some(crate::constraints::Monotone::Nondecreasing) => ramp * t as f64,
                None => 0.0,
            };
        }
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = u.iter().sum();
        for t in 0..t_len {
            for (dd, ud) in u.iter().enumerate() {
                v[[j, t, dd]] = curve[t] * ud / total;
            }
        }
    }
    FactorState {
        w: Array2::ones((n, d)),
        v,
    }
}

/// Weighted absolute deviation `Σ n_c |ȳ_c - θ_c|` over observed cells.
pub fn l1_objective(index: &CellIndex, f: &FactorState) -> f64 {
    index
        .cells
        .iter()
        .map(|c| {
            let n = c.values.len() as f64;
            let mean = c.values.iter().sum::<f64>() / n;
            n * (mean - f.theta(c.row, c.col, c.dose)).abs()
        })
        .sum()
}

/// Solves one block LP. `points[p]` maps the block vector to a curve value
/// through `(offset, coefs)`; curves are consecutive runs of `t_len` points.
struct BlockLp<'a> {
    dim: usize,
    t_len: usize,
    points: Vec<(usize, &'a [f64])>,
    /// `(point, weight, target)` for observed cells.
    data: Vec<(usize, f64, f64)>,
}

impl BlockLp<'_> {
    fn solve(&self, rows: &[CurveRow], cfg: &AlsConfig) -> Option<Vec<f64>> {
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let x: Vec<_> = (0..self.dim)
            .map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
            .collect();
        let expr = |p: usize, scale: f64, out: &mut Vec<(microlp::Variable, f64)>| {
            let (off, coefs) = self.points[p];
            for (k, &c) in coefs.iter().enumerate() {
                if c != 0.0 {
                    out.push((x[off + k], scale * c));
                }
            }
        };
        for &(p, weight, target) in &self.data {
            let e = lp.add_var(weight, (0.0, f64::INFINITY));
            let mut above = vec![(e, 1.0)];
            expr(p, 1.0, &mut above);
            lp.add_constraint(above, ComparisonOp::Ge, target);
            let mut below = vec![(e, 1.0)];
            expr(p, -1.0, &mut below);
            lp.add_constraint(below, ComparisonOp::Ge, -target);
        }
        for curve in 0..self.points.len() / self.t_len {
            for r in rows {
                let mut dense = vec![0.0; self.dim];
                for &(t, c) in &r.coefs {
                    let (off, coefs) = self.points[curve * self.t_len + t];
                    for (k, &a) in coefs.iter().enumerate() {
                        dense[off + k] += c * a;
                    }
                }
                let terms: Vec<_> = dense
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| **a != 0.0)
                    .map(|(k, &a)| (x[k], a))
                    .collect();
                if terms.is_empty() {
                    continue;
                }
                lp.add_constraint(terms, ComparisonOp::Ge, r.gamma + margin_for(r, cfg));
            }
        }
        let sol = lp.solve().ok()?.into_solution().ok()?;
        Some(x.iter().map(|&v| sol.var_value(v)).collect())
    }
}

fn curve_rows_feasible(rows: &[CurveRow], values: &[f64]) -> bool {
    rows.iter().all(|r| r.eval(values) >= r.gamma)
}

/// Alternating constrained L1 fit followed by the pseudo-observation summary.
///
/// `start` overrides the built-in feasible starting point; it must satisfy
/// the constraints on every scoped pair.
pub fn init_constrained_als<R: Rng + ?Sized>(
    y: &ObservationTensor,
    kind: &ConstraintKind,
    cfg: &AlsConfig,
    start: Option<FactorState>,
    rng: &mut R,
) -> Result<PseudoEpApprox> {
    if y.observed_count() == 0 {
        return Err(BtfError::InsufficientData("tensor has no observed cells".into()));
    }
    if cfg.d == 0 {
        return Err(BtfError::InvalidArgument("factor dimension must be at least 1".into()));
    }
    if let (Some(lo), Some(hi)) = (kind.lower, kind.upper) {
        if !(lo < hi) {
            return Err(BtfError::Infeasible(format!("empty bound interval [{lo}, {hi}]")));
        }
    }
    let (n, m, t_len, _) = y.dims();
    let index = y.cell_index();
    let pairs = scoped_pairs(&index, kind, cfg.scope);
    let rows = kind.curve_rows(t_len);
    let mut f = match start {
        Some(s) => s,
        None => feasible_start(y, &index, kind, cfg.d, rng),
    };
    if f.dims() != (n, m, t_len, cfg.d) {
        return Err(BtfError::ShapeMismatch(format!(
            "starting factors {:?} for tensor {:?} with D = {}",
            f.dims(),
            (n, m, t_len),
            cfg.d
        )));
    }
    check_scoped_feasible(&f, &rows, &pairs)?;

    let mut objective = l1_objective(&index, &f);
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        for i in 0..n {
            let cols: Vec<usize> = (0..m).filter(|&j| pairs[i][j]).collect();
            let v_snapshot = f.v.clone();
            let vs = v_snapshot.as_slice().expect("standard layout");
            let d = cfg.d;
            let mut points = Vec::with_capacity(cols.len() * t_len);
            for &j in &cols {
                for t in 0..t_len {
                    let o = (j * t_len + t) * d;
                    points.push((0usize, &vs[o..o + d]));
                }
            }
            let data = index.by_row[i]
                .iter()
                .map(|&k| {
                    let c = &index.cells[k];
                    let pos = cols.iter().position(|&j| j == c.col).expect("observed pair is scoped");
                    let nrep = c.values.len() as f64;
                    (pos * t_len + c.dose, nrep, c.values.iter().sum::<f64>() / nrep)
                })
                .collect();
            let lp = BlockLp {
                dim: d,
                t_len,
                points,
                data,
            };
            if let Some(w) = lp.solve(&rows, cfg) {
                let old = f.w_row(i).to_vec();
                f.set_w_row(i, &w);
                if !pair_curves_feasible(&f, &rows, &pairs, Some(i), None) {
                    f.set_w_row(i, &old);
                }
            }
        }
        for j in 0..m {
            let d = cfg.d;
            let rws: Vec<usize> = (0..n).filter(|&i| pairs[i][j]).collect();
            let w_snapshot = f.w.clone();
            let ws = w_snapshot.as_slice().expect("standard layout");
            let mut points = Vec::with_capacity(rws.len() * t_len);
            for &i in &rws {
                for t in 0..t_len {
                    points.push((t * d, &ws[i * d..(i + 1) * d]));
                }
            }
            let data = index.by_col[j]
                .iter()
                .map(|&k| {
                    let c = &index.cells[k];
                    let pos = rws.iter().position(|&i| i == c.row).expect("observed pair is scoped");
                    let nrep = c.values.len() as f64;
                    (pos * t_len + c.dose, nrep, c.values.iter().sum::<f64>() / nrep)
                })
                .collect();
            let lp = BlockLp {
                dim: t_len * d,
                t_len,
                points,
                data,
            };
            if let Some(v) = lp.solve(&rows, cfg) {
                let old = f.v_curve(j).to_vec();
                f.set_v_curve(j, &v);
                if !pair_curves_feasible(&f, &rows, &pairs, None, Some(j)) {
                    f.set_v_curve(j, &old);
                }
            }
        }
        let next = l1_objective(&index, &f);
        let improvement = (objective - next) / objective.max(1e-12);
        objective = next;
        if improvement < cfg.rel_tol {
            break;
        }
    }

    let (pseudo_obs, pseudo_var) = pseudo_summary(&index, &f, cfg);
    Ok(PseudoEpApprox {
        pseudo_obs,
        pseudo_var,
        inflation: cfg.inflation,
        factors: f,
        iterations,
        objective,
    })
}

/// Pseudo-observations `⟨w_i, v_jt⟩` and inflated residual variances.
fn pseudo_summary(index: &CellIndex, f: &FactorState, cfg: &AlsConfig) -> (Array3<f64>, Array3<f64>) {
    let (n, m, t_len, _) = f.dims();
    let theta = f.theta_all();
    let mut row_ss = vec![0.0; n];
    let mut row_n = vec![0usize; n];
    let mut col_ss = vec![0.0; m];
    let mut col_n = vec![0usize; m];
    for c in &index.cells {
        let th = theta[[c.row, c.col, c.dose]];
        for &y in &c.values {
            let r2 = (y - th).powi(2);
            row_ss[c.row] += r2;
            row_n[c.row] += 1;
            col_ss[c.col] += r2;
            col_n[c.col] += 1;
        }
    }
    let mse = |ss: f64, k: usize| if k > 0 { ss / k as f64 } else { 0.0 };
    let mut var = Array3::zeros((n, m, t_len));
    for i in 0..n {
        for j in 0..m {
            let v = 0.5 * (mse(row_ss[i], row_n[i]) + mse(col_ss[j], col_n[j]));
            var.slice_mut(ndarray::s![i, j, ..]).fill((cfg.inflation * v).max(cfg.var_floor));
        }
    }
    (theta, var)
}

fn pair_curves_feasible(
    f: &FactorState,
    rows: &[CurveRow],
    pairs: &[Vec<bool>],
    only_row: Option<usize>,
    only_col: Option<usize>,
) -> bool {
    let (n, m, ..) = f.dims();
    for i in 0..n {
        if only_row.is_some_and(|r| r != i) {
            continue;
        }
        for j in 0..m {
            if only_col.is_some_and(|c| c != j) || !pairs[i][j] {
                continue;
            }
            let curve = f.inner_curve(i, j).expect("indices in range");
            if !curve_rows_feasible(rows, &curve) {
                return false;
            }
        }
    }
    true
}

fn check_scoped_feasible(f: &FactorState, rows: &[CurveRow], pairs: &[Vec<bool>]) -> Result<()> {
    if pair_curves_feasible(f, rows, pairs, None, None) {
        Ok(())
    } else {
        Err(BtfError::Infeasible("starting factors violate the curve constraints".into()))
    }
}
