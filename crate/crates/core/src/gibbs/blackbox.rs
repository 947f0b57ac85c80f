//! Slice-sampled row and column updates for arbitrary cell likelihoods.
//!
//! Each block (one `w_i` or one `vec(V_j)`) gets a Gaussian proposal prior that
//! combines its true prior with the pseudo-observations, and GASS then targets
//! that prior times `exp(ℓ_true - ℓ_pseudo)` under the curve constraints, which
//! leaves the block conditional unchanged.

use rand::Rng;
use rayon::prelude::*;

use super::conjugate::{column_canonical, column_prior_precision, row_canonical, CellTerms};
use super::als::PseudoEpApprox;
use super::SweepKey;
use crate::constraints::{ConstraintKind, ConstraintScope, CurveRow};
use crate::error::{BtfError, Result};
use crate::likelihood::{gaussian_log_density, CellLikelihood};
use crate::model::{FactorState, ShrinkageState};
use crate::rng::Phase;
use crate::samplers::gass::{ellipse_point, select_on_grid};
use crate::samplers::{GassConfig, MvnPrior};
use crate::tensor::{CellIndex, ObservedCell};
use crate::trend::CompositeDiffMatrix;

/// Relative tolerance for the feasibility precondition on the current state.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// True, pseudo and corrected log-likelihood of one cell at `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoglikParts {
    pub true_ll: f64,
    pub pseudo_ll: f64,
    pub corrected: f64,
}

pub fn corrected_loglik(
    lik: &dyn CellLikelihood,
    cell: &ObservedCell,
    pseudo: Option<(f64, f64)>,
    theta: f64,
) -> LoglikParts {
    let true_ll = lik.log_lik(cell, theta);
    let pseudo_ll = pseudo.map_or(0.0, |(m, s2)| gaussian_log_density(m, theta, s2));
    LoglikParts {
        true_ll,
        pseudo_ll,
        corrected: true_ll - pseudo_ll,
    }
}

/// Everything the slice-sampled updates share within a sweep.
pub struct BlackBoxContext<'a> {
    pub index: &'a CellIndex,
    pub lik: &'a dyn CellLikelihood,
    pub kind: ConstraintKind,
    pub pairs: &'a [Vec<bool>],
    pub ep: Option<&'a PseudoEpApprox>,
    /// Pseudo-observation terms aligned with `index.cells`.
    pub pseudo_terms: Option<&'a CellTerms>,
    pub gass: GassConfig,
}

/// Pairs carrying constraints under `scope`, or the observed pairs when no
/// constraint is active.
pub fn constrained_pairs(index: &CellIndex, kind: &ConstraintKind, scope: ConstraintScope) -> Vec<Vec<bool>> {
    super::als::scoped_pairs(index, kind, scope)
}

/// Pseudo-observation terms `(1/s², m/s²)` per observed cell.
pub fn pseudo_terms(index: &CellIndex, ep: &PseudoEpApprox) -> CellTerms {
    let mut lambda = Vec::with_capacity(index.cells.len());
    let mut g = Vec::with_capacity(index.cells.len());
    for c in &index.cells {
        let (m, s2) = (ep.pseudo_obs[[c.row, c.col, c.dose]], ep.pseudo_var[[c.row, c.col, c.dose]]);
        lambda.push(1.0 / s2);
        g.push(m / s2);
    }
    CellTerms { lambda, g }
}

/// Linear maps from a block vector to the curve values it influences.
struct Block<'a> {
    t_len: usize,
    /// `(offset, coefs)`: value = coefs · x[offset..offset + D].
    points: Vec<(usize, &'a [f64])>,
    /// `(point, cell index)` for observed cells.
    cells: Vec<(usize, usize)>,
}

impl Block<'_> {
    fn project(&self, x: &[f64]) -> Vec<f64> {
        self.points
            .iter()
            .map(|&(off, c)| c.iter().zip(&x[off..off + c.len()]).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn n_curves(&self) -> usize {
        self.points.len() / self.t_len
    }
}

fn rows_hold(rows: &[CurveRow], values: &[f64], t_len: usize, tol: f64) -> std::result::Result<(), (usize, f64, f64)> {
    for c in 0..values.len() / t_len {
        let curve = &values[c * t_len..(c + 1) * t_len];
        for r in rows {
            let lhs = r.eval(curve);
            if !(lhs >= r.gamma - tol * (1.0 + r.gamma.abs())) {
                return Err((c, lhs, r.gamma));
            }
        }
    }
    Ok(())
}

/// One GASS move of a block. Returns the new block and whether it was degenerate.
fn block_step<R: Rng + ?Sized>(
    ctx: &BlackBoxContext<'_>,
    block: &Block<'_>,
    rows: &[CurveRow],
    x: &[f64],
    prior: &MvnPrior,
    label: &str,
    rng: &mut R,
) -> Result<(Vec<f64>, bool)> {
    let loglik = |values: &[f64]| -> f64 {
        block
            .cells
            .iter()
            .map(|&(p, k)| {
                let cell = &ctx.index.cells[k];
                let pseudo = ctx
                    .ep
                    .map(|ep| (ep.pseudo_obs[[cell.row, cell.col, cell.dose]], ep.pseudo_var[[cell.row, cell.col, cell.dose]]));
                corrected_loglik(ctx.lik, cell, pseudo, values[p]).corrected
            })
            .sum()
    };
    let current = block.project(x);
    if let Err((c, lhs, g)) = rows_hold(rows, &current, block.t_len, FEASIBILITY_TOL) {
        return Err(BtfError::Infeasible(format!(
            "{label}: curve {c} has constraint value {lhs} below {g}"
        )));
    }
    let ll0 = loglik(&current);
    if !ll0.is_finite() {
        return Err(BtfError::InvalidArgument(format!(
            "{label}: log-likelihood {ll0} at the current state"
        )));
    }
    let threshold = ll0 + rng.random::<f64>().ln();
    let mu = prior.mean();
    let nu = prior.sample_centered(rng);
    let centred: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
    let a = block.project(&centred);
    let b = block.project(&nu);
    let c = block.project(mu);

    let t_len = block.t_len;
    let mut triples = Vec::with_capacity(block.n_curves() * rows.len());
    for curve in 0..block.n_curves() {
        let base = curve * t_len;
        for r in rows {
            let (mut ta, mut tb, mut tc) = (0.0, 0.0, 0.0);
            for &(t, coef) in &r.coefs {
                ta += coef * a[base + t];
                tb += coef * b[base + t];
                tc += coef * c[base + t];
            }
            triples.push((ta, tb, r.gamma - tc));
        }
    }

    let mut values = vec![0.0; a.len()];
    let picked = select_on_grid(triples, &ctx.gass, rng, |angle| {
        if angle == 0.0 {
            return Some(x.to_vec());
        }
        let (s, co) = angle.sin_cos();
        for p in 0..values.len() {
            values[p] = a[p] * co + b[p] * s + c[p];
        }
        if rows_hold(rows, &values, t_len, 0.0).is_err() {
            return None;
        }
        (loglik(&values) >= threshold).then(|| ellipse_point(x, &nu, mu, angle))
    });
    Ok(match picked {
        Some(new) => (new, false),
        None => (x.to_vec(), true),
    })
}

/// Slice-samples every row of `W`. Returns the number of degenerate moves.
pub fn update_rows_blackbox(
    ctx: &BlackBoxContext<'_>,
    factors: &mut FactorState,
    sigma2: f64,
    key: SweepKey,
) -> Result<u64> {
    let (n, m, t_len, d) = factors.dims();
    let rows = ctx.kind.curve_rows(t_len);
    let zero_terms;
    let terms = match ctx.pseudo_terms {
        Some(t) => t,
        None => {
            zero_terms = CellTerms {
                lambda: vec![0.0; ctx.index.cells.len()],
                g: vec![0.0; ctx.index.cells.len()],
            };
            &zero_terms
        }
    };
    let results: Vec<(Vec<f64>, bool)> = {
        let f: &FactorState = factors;
        let vs = f.v.as_slice().expect("standard layout");
        (0..n)
            .into_par_iter()
            .map(|i| {
                let cols: Vec<usize> = (0..m).filter(|&j| ctx.pairs[i][j]).collect();
                let mut pos = vec![usize::MAX; m];
                for (k, &j) in cols.iter().enumerate() {
                    pos[j] = k;
                }
                let mut points = Vec::with_capacity(cols.len() * t_len);
                for &j in &cols {
                    for t in 0..t_len {
                        let o = (j * t_len + t) * d;
                        points.push((0usize, &vs[o..o + d]));
                    }
                }
                let cells = ctx.index.by_row[i]
                    .iter()
                    .map(|&k| {
                        let c = &ctx.index.cells[k];
                        (pos[c.col] * t_len + c.dose, k)
                    })
                    .collect();
                let block = Block { t_len, points, cells };
                let (h, lambda) = row_canonical(ctx.index, terms, f, sigma2, i);
                let label = format!("row {i}");
                let prior = MvnPrior::from_canonical(&h, &lambda, &format!("{label} proposal precision"))?;
                let mut rng = key.rng(Phase::Rows, i as u64);
                block_step(ctx, &block, &rows, f.w_row(i), &prior, &label, &mut rng)
            })
            .collect::<Result<_>>()?
    };
    let mut degenerate = 0;
    for (i, (w, deg)) in results.into_iter().enumerate() {
        factors.set_w_row(i, &w);
        degenerate += deg as u64;
    }
    Ok(degenerate)
}

/// Slice-samples every column curve. Returns the number of degenerate moves.
pub fn update_cols_blackbox(
    ctx: &BlackBoxContext<'_>,
    factors: &mut FactorState,
    shrinkage: &ShrinkageState,
    delta: &CompositeDiffMatrix,
    key: SweepKey,
) -> Result<u64> {
    let (n, m, t_len, d) = factors.dims();
    let rows = ctx.kind.curve_rows(t_len);
    let zero_terms;
    let terms = match ctx.pseudo_terms {
        Some(t) => t,
        None => {
            zero_terms = CellTerms {
                lambda: vec![0.0; ctx.index.cells.len()],
                g: vec![0.0; ctx.index.cells.len()],
            };
            &zero_terms
        }
    };
    let results: Vec<(Vec<f64>, bool)> = {
        let f: &FactorState = factors;
        let ws = f.w.as_slice().expect("standard layout");
        (0..m)
            .into_par_iter()
            .map(|j| {
                let rws: Vec<usize> = (0..n).filter(|&i| ctx.pairs[i][j]).collect();
                let mut pos = vec![usize::MAX; n];
                for (k, &i) in rws.iter().enumerate() {
                    pos[i] = k;
                }
                let mut points = Vec::with_capacity(rws.len() * t_len);
                for &i in &rws {
                    for t in 0..t_len {
                        points.push((t * d, &ws[i * d..(i + 1) * d]));
                    }
                }
                let cells = ctx.index.by_col[j]
                    .iter()
                    .map(|&k| {
                        let c = &ctx.index.cells[k];
                        (pos[c.row] * t_len + c.dose, k)
                    })
                    .collect();
                let block = Block { t_len, points, cells };
                let prior_prec = column_prior_precision(delta, shrinkage.rho2, &shrinkage.columns[j].tau2, d)?;
                let (h, lambda) = column_canonical(ctx.index, terms, f, &prior_prec, j);
                let label = format!("column {j}");
                let prior = MvnPrior::from_canonical(&h, &lambda, &format!("{label} proposal precision"))?;
                let mut rng = key.rng(Phase::Columns, j as u64);
                block_step(ctx, &block, &rows, f.v_curve(j), &prior, &label, &mut rng)
            })
            .collect::<Result<_>>()?
    };
    let mut degenerate = 0;
    for (j, (v, deg)) in results.into_iter().enumerate() {
        factors.set_v_curve(j, &v);
        degenerate += deg as u64;
    }
    Ok(degenerate)
}

/// Checks every constrained curve of the state, with a small relative tolerance.
pub fn check_feasible(factors: &FactorState, kind: &ConstraintKind, pairs: &[Vec<bool>]) -> Result<()> {
    let (n, m, t_len, _) = factors.dims();
    let rows = kind.curve_rows(t_len);
    if rows.is_empty() {
        return Ok(());
    }
    for i in 0..n {
        for j in 0..m {
            if !pairs[i][j] {
                continue;
            }
            let curve = factors.inner_curve(i, j)?;
            if let Err((_, lhs, g)) = rows_hold(&rows, &curve, t_len, FEASIBILITY_TOL) {
                return Err(BtfError::Infeasible(format!(
                    "curve ({i}, {j}) has constraint value {lhs} below {g}"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::PoissonLik;

    #[test]
    fn correction_identity() {
        let mut rng = crate::rng::seeded(81);
        let cell = ObservedCell {
            row: 0,
            col: 0,
            dose: 0,
            values: vec![3.0, 5.0],
        };
        for _ in 0..1000 {
            let theta = rng.random_range(0.01..20.0);
            let m = rng.random_range(-5.0..25.0);
            let s2 = rng.random_range(1e-4..50.0);
            let p = corrected_loglik(&PoissonLik, &cell, Some((m, s2)), theta);
            assert!((p.corrected + p.pseudo_ll - p.true_ll).abs() < 1e-10);
        }
    }
}
