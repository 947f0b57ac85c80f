//! Conditionally Gaussian row and column updates.
//!
//! Every observed cell contributes `-½ λ θ² + g θ` to the log conditional of
//! the factors it touches, with `(λ, g)` supplied by the likelihood family:
//! `(R/ν², Σy/ν²)` for Gaussian data, `(ψ, Σy - nR/2)` for Pólya–Gamma augmented
//! binomial data, and `(1/s², m/s²)` for a Gaussian pseudo-observation `m`.

use ndarray::Array2;
use rayon::prelude::*;

use super::SweepKey;
use crate::error::{BtfError, Result};
use crate::linalg::BandedSym;
use crate::model::{FactorState, ShrinkageState};
use crate::rng::Phase;
use crate::samplers::{polya_gamma_sample, MvnPrior};
use crate::tensor::CellIndex;
use crate::trend::CompositeDiffMatrix;

/// Quadratic and linear coefficients per observed cell, aligned with `CellIndex::cells`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTerms {
    pub lambda: Vec<f64>,
    pub g: Vec<f64>,
}

impl CellTerms {
    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }
}

/// Terms for Gaussian replicates with noise variance `nu2`.
pub fn gaussian_terms(index: &CellIndex, nu2: f64) -> CellTerms {
    let lambda = index.cells.iter().map(|c| c.values.len() as f64 / nu2).collect();
    let g = index
        .cells
        .iter()
        .map(|c| c.values.iter().sum::<f64>() / nu2)
        .collect();
    CellTerms { lambda, g }
}

/// Terms for binomial replicates after one Pólya–Gamma draw per cell.
/// Each `round` within a sweep uses its own streams.
pub fn binomial_terms(
    index: &CellIndex,
    trials: &ndarray::Array3<u64>,
    factors: &FactorState,
    key: SweepKey,
    round: u64,
) -> Result<CellTerms> {
    let offset = round * index.cells.len() as u64;
    let pairs: Vec<(f64, f64)> = index
        .cells
        .par_iter()
        .enumerate()
        .map(|(k, c)| {
            let n = trials[[c.row, c.col, c.dose]] as f64;
            let b = n * c.values.len() as f64;
            let kappa = c.values.iter().sum::<f64>() - b / 2.0;
            if b == 0.0 {
                return Ok((0.0, 0.0));
            }
            let theta = factors.theta(c.row, c.col, c.dose);
            let mut rng = key.rng(Phase::Augment, offset + k as u64);
            Ok((polya_gamma_sample(b, theta, &mut rng)?, kappa))
        })
        .collect::<Result<_>>()?;
    Ok(CellTerms {
        lambda: pairs.iter().map(|p| p.0).collect(),
        g: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Canonical parameters `(h, Λ)` of the Gaussian conditional for row `i`.
pub fn row_canonical(
    index: &CellIndex,
    terms: &CellTerms,
    factors: &FactorState,
    sigma2: f64,
    i: usize,
) -> (Vec<f64>, BandedSym) {
    let d = factors.w.ncols();
    let mut lambda = BandedSym::identity_scaled(d, d.saturating_sub(1), 1.0 / sigma2);
    let mut h = vec![0.0; d];
    for &k in &index.by_row[i] {
        let c = &index.cells[k];
        let v = factors.v_point(c.col, c.dose);
        let (l, g) = (terms.lambda[k], terms.g[k]);
        for a in 0..d {
            h[a] += g * v[a];
            for b in 0..=a {
                lambda.add(a, b, l * v[a] * v[b]);
            }
        }
    }
    (h, lambda)
}

/// Smallest difference variance `ρ²τ²` used when assembling a precision.
pub const MIN_DIFF_VARIANCE: f64 = 1e-10;

/// Prior precision of `vec(V_j)` in dose-major layout. Difference variances
/// below [`MIN_DIFF_VARIANCE`] are raised to it so the factorization stays
/// well conditioned.
pub fn column_prior_precision(
    delta: &CompositeDiffMatrix,
    rho2: f64,
    tau2: &[f64],
    d: usize,
) -> Result<BandedSym> {
    let floor = MIN_DIFF_VARIANCE / rho2;
    let tau2: Vec<f64> = tau2.iter().map(|t| t.max(floor)).collect();
    let p = delta.prior_precision(rho2, &tau2)?;
    let t_len = delta.grid_len();
    let bw = p.bandwidth();
    let mut out = BandedSym::zeros(t_len * d, (bw * d).max(d - 1));
    for a in 0..t_len {
        for b in a.saturating_sub(bw)..=a {
            let v = p.get(a, b);
            for k in 0..d {
                out.add(a * d + k, b * d + k, v);
            }
        }
    }
    Ok(out)
}

/// Canonical parameters of the Gaussian conditional for `vec(V_j)`.
pub fn column_canonical(
    index: &CellIndex,
    terms: &CellTerms,
    factors: &FactorState,
    prior: &BandedSym,
    j: usize,
) -> (Vec<f64>, BandedSym) {
    let d = factors.w.ncols();
    let mut lambda = prior.clone();
    let mut h = vec![0.0; prior.dim()];
    for &k in &index.by_col[j] {
        let c = &index.cells[k];
        let w = factors.w_row(c.row);
        let (l, g) = (terms.lambda[k], terms.g[k]);
        let base = c.dose * d;
        for a in 0..d {
            h[base + a] += g * w[a];
            for b in 0..=a {
                lambda.add(base + a, base + b, l * w[a] * w[b]);
            }
        }
    }
    (h, lambda)
}

/// Redraws every row of `W` from its Gaussian conditional.
pub fn update_rows_conjugate(
    index: &CellIndex,
    terms: &CellTerms,
    factors: &mut FactorState,
    sigma2: f64,
    key: SweepKey,
) -> Result<()> {
    let n = factors.w.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (h, lambda) = row_canonical(index, terms, factors, sigma2, i);
            let mut rng = key.rng(Phase::Rows, i as u64);
            Ok(MvnPrior::from_canonical(&h, &lambda, &format!("row {i} precision"))?.sample(&mut rng))
        })
        .collect::<Result<_>>()?;
    for (i, r) in rows.iter().enumerate() {
        factors.set_w_row(i, r);
    }
    Ok(())
}

/// Redraws every column curve `vec(V_j)` from its Gaussian conditional.
pub fn update_cols_conjugate(
    index: &CellIndex,
    terms: &CellTerms,
    factors: &mut FactorState,
    shrinkage: &ShrinkageState,
    delta: &CompositeDiffMatrix,
    key: SweepKey,
) -> Result<()> {
    let (_, m, _, d) = factors.dims();
    if shrinkage.columns.len() != m {
        return Err(BtfError::ShapeMismatch(format!(
            "{} shrinkage columns for {m} factor columns",
            shrinkage.columns.len()
        )));
    }
    let cols: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let prior = column_prior_precision(delta, shrinkage.rho2, &shrinkage.columns[j].tau2, d)?;
            let (h, lambda) = column_canonical(index, terms, factors, &prior, j);
            let mut rng = key.rng(Phase::Columns, j as u64);
            Ok(MvnPrior::from_canonical(&h, &lambda, &format!("column {j} precision"))?.sample(&mut rng))
        })
        .collect::<Result<_>>()?;
    for (j, c) in cols.iter().enumerate() {
        factors.set_v_curve(j, c);
    }
    Ok(())
}

/// Row-factor matrix drawn from the `N(0, σ²I)` prior.
pub fn sample_rows_prior<R: rand::Rng + ?Sized>(n: usize, d: usize, sigma2: f64, rng: &mut R) -> Array2<f64> {
    let s = sigma2.sqrt();
    Array2::from_shape_simple_fn((n, d), || s * rng.sample::<f64, _>(rand_distr::StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense_inverse;
    use crate::stats::mean;
    use crate::tensor::ObservationTensor;
    use ndarray::{Array3, Array4};

    fn key(seed: u64, sweep: u64) -> SweepKey {
        SweepKey { seed, sweep }
    }

    #[test]
    fn scalar_row_conjugate() {
        // one observation y = 1.4 with v = 1, ν² = σ² = 1: precision 2, mean y/2
        let y = ObservationTensor::from_long(vec![(0, 0, 0, 0, 1.4)]).unwrap();
        let index = y.cell_index();
        let terms = gaussian_terms(&index, 1.0);
        let mut f = FactorState::new(Array2::zeros((1, 1)), Array3::ones((1, 1, 1))).unwrap();
        let (h, lambda) = row_canonical(&index, &terms, &f, 1.0, 0);
        assert_eq!(lambda.get(0, 0), 2.0);
        assert!((h[0] - 1.4).abs() < 1e-15);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|s| {
                update_rows_conjugate(&index, &terms, &mut f, 1.0, key(1, s)).unwrap();
                f.w[[0, 0]]
            })
            .collect();
        assert!((mean(&xs) - 0.7).abs() < 3.0 * (0.5 / n as f64).sqrt());
        assert!((crate::stats::variance(&xs) - 0.5).abs() < 0.01);
    }

    #[test]
    fn unobserved_row_draws_prior() {
        let mut vals = Array4::zeros((2, 1, 1, 1));
        vals[[0, 0, 0, 0]] = 1.0;
        let mut mask = Array4::from_elem((2, 1, 1, 1), false);
        mask[[0, 0, 0, 0]] = true;
        let y = ObservationTensor::new(vals, mask).unwrap();
        let index = y.cell_index();
        let terms = gaussian_terms(&index, 1.0);
        let mut f = FactorState::new(Array2::zeros((2, 2)), Array3::ones((1, 1, 2))).unwrap();
        let n = 50_000;
        let mut xs = Vec::new();
        for s in 0..n {
            update_rows_conjugate(&index, &terms, &mut f, 3.0, key(2, s)).unwrap();
            xs.push(f.w[[1, 1]]);
        }
        assert!(mean(&xs).abs() < 3.0 * (3.0 / n as f64).sqrt());
        assert!((crate::stats::variance(&xs) / 3.0 - 1.0).abs() < 0.03);
    }

    #[test]
    fn column_two_by_two_precision() {
        // N = 1, D = 1, T = 2, k = 0, unit scales, W = [1]: Λ = ΔᵀΔ + I
        let y = ObservationTensor::from_long(vec![(0, 0, 0, 0, 0.3), (0, 0, 1, 0, -0.8)]).unwrap();
        let index = y.cell_index();
        let terms = gaussian_terms(&index, 1.0);
        let mut f = FactorState::new(Array2::ones((1, 1)), Array3::zeros((1, 2, 1))).unwrap();
        let delta = CompositeDiffMatrix::new(2, 0).unwrap();
        let shrink = ShrinkageState::new(1, delta.n_rows(), 1.0, 1.0).unwrap();
        let prior = column_prior_precision(&delta, 1.0, &shrink.columns[0].tau2, 1).unwrap();
        let (h, lambda) = column_canonical(&index, &terms, &f, &prior, 0);
        assert_eq!(lambda.to_dense(), vec![vec![3.0, -1.0], vec![-1.0, 2.0]]);

        let cov = dense_inverse(&lambda.to_dense()).unwrap();
        let mu: Vec<f64> = (0..2).map(|a| cov[a][0] * h[0] + cov[a][1] * h[1]).collect();
        let n = 100_000;
        let mut draws = [Vec::new(), Vec::new()];
        for s in 0..n {
            update_cols_conjugate(&index, &terms, &mut f, &shrink, &delta, key(3, s)).unwrap();
            draws[0].push(f.v[[0, 0, 0]]);
            draws[1].push(f.v[[0, 1, 0]]);
        }
        for a in 0..2 {
            assert!((mean(&draws[a]) - mu[a]).abs() < 3.0 * (cov[a][a] / n as f64).sqrt());
            assert!((crate::stats::variance(&draws[a]) / cov[a][a] - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn column_precision_interleaves_coordinates() {
        let delta = CompositeDiffMatrix::new(3, 1).unwrap();
        let tau2 = vec![1.0; delta.n_rows()];
        let p1 = delta.prior_precision(0.5, &tau2).unwrap();
        let p2 = column_prior_precision(&delta, 0.5, &tau2, 2).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(p2.get(a * 2, b * 2), p1.get(a, b));
                assert_eq!(p2.get(a * 2 + 1, b * 2 + 1), p1.get(a, b));
                assert_eq!(p2.get(a * 2, b * 2 + 1), 0.0);
            }
        }
    }
}
