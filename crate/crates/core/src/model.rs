//! Factor, shrinkage and posterior-sample state.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{BtfError, Result};
use crate::linalg::dot;

/// Row factors `W` (`N x D`) and functional column factors `V` (`M x T x D`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorState {
    pub w: Array2<f64>,
    pub v: Array3<f64>,
}

impl FactorState {
    pub fn new(w: Array2<f64>, v: Array3<f64>) -> Result<Self> {
        if w.ncols() != v.shape()[2] {
            return Err(BtfError::ShapeMismatch(format!(
                "W has {} factors but V has {}",
                w.ncols(),
                v.shape()[2]
            )));
        }
        if w.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(BtfError::NonFinite {
                value: f64::NAN,
                location: "factor state".into(),
            });
        }
        Ok(Self {
            w: w.as_standard_layout().into_owned(),
            v: v.as_standard_layout().into_owned(),
        })
    }

    pub fn zeros(n: usize, m: usize, t: usize, d: usize) -> Self {
        Self {
            w: Array2::zeros((n, d)),
            v: Array3::zeros((m, t, d)),
        }
    }

    /// Independent `N(0, scale²)` entries.
    pub fn random<R: Rng + ?Sized>(
        n: usize,
        m: usize,
        t: usize,
        d: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut draw = || scale * Distribution::<f64>::sample(&StandardNormal, rng);
        let w = Array2::from_shape_simple_fn((n, d), &mut draw);
        let v = Array3::from_shape_simple_fn((m, t, d), &mut draw);
        Self { w, v }
    }

    /// `(N, M, T, D)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.v.shape();
        (self.w.nrows(), s[0], s[1], s[2])
    }

    #[inline]
    pub fn w_row(&self, i: usize) -> &[f64] {
        let d = self.w.ncols();
        &self.w.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    #[inline]
    pub fn v_point(&self, j: usize, t: usize) -> &[f64] {
        let s = self.v.shape();
        let (tl, d) = (s[1], s[2]);
        let o = (j * tl + t) * d;
        &self.v.as_slice().expect("standard layout")[o..o + d]
    }

    /// `vec(V_j)` in dose-major order (`index = t * D + d`).
    #[inline]
    pub fn v_curve(&self, j: usize) -> &[f64] {
        let s = self.v.shape();
        let len = s[1] * s[2];
        &self.v.as_slice().expect("standard layout")[j * len..(j + 1) * len]
    }

    pub fn set_w_row(&mut self, i: usize, x: &[f64]) {
        let d = self.w.ncols();
        self.w.as_slice_mut().expect("standard layout")[i * d..(i + 1) * d].copy_from_slice(x);
    }

    pub fn set_v_curve(&mut self, j: usize, x: &[f64]) {
        let s = self.v.shape();
        let len = s[1] * s[2];
        self.v.as_slice_mut().expect("standard layout")[j * len..(j + 1) * len]
            .copy_from_slice(x);
    }

    /// `⟨W_i, V_jt⟩`.
    #[inline]
    pub fn theta(&self, i: usize, j: usize, t: usize) -> f64 {
        dot(self.w_row(i), self.v_point(j, t))
    }

    /// The curve `t ↦ ⟨W_i, V_jt⟩`.
    pub fn inner_curve(&self, i: usize, j: usize) -> Result<Vec<f64>> {
        let (n, m, t_len, _) = self.dims();
        if i >= n || j >= m {
            return Err(BtfError::IndexOutOfRange(format!(
                "({i}, {j}) outside {n} x {m}"
            )));
        }
        Ok((0..t_len).map(|t| self.theta(i, j, t)).collect())
    }

    /// All inner products as an `N x M x T` array.
    pub fn theta_all(&self) -> Array3<f64> {
        let (n, m, t_len, _) = self.dims();
        Array3::from_shape_fn((n, m, t_len), |(i, j, t)| self.theta(i, j, t))
    }
}

/// Horseshoe+ local scales for one column, one entry per difference row.
///
/// `tau2` and `phi` hold squared scales; `c` and `eta` are the inverse-gamma
/// auxiliaries of the two half-Cauchy levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalScales {
    pub tau2: Vec<f64>,
    pub c: Vec<f64>,
    pub phi: Vec<f64>,
    pub eta: Vec<f64>,
}

impl LocalScales {
    pub fn ones(l: usize) -> Self {
        Self {
            tau2: vec![1.0; l],
            c: vec![1.0; l],
            phi: vec![1.0; l],
            eta: vec![1.0; l],
        }
    }

    pub fn len(&self) -> usize {
        self.tau2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau2.is_empty()
    }

    pub fn all_positive(&self) -> bool {
        self.tau2
            .iter()
            .chain(&self.c)
            .chain(&self.phi)
            .chain(&self.eta)
            .all(|&x| x > 0.0 && x.is_finite())
    }
}

/// Shrinkage state: per-column local scales, the global `ρ²` and row variance `σ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageState {
    pub columns: Vec<LocalScales>,
    pub rho2: f64,
    pub sigma2: f64,
}

impl ShrinkageState {
    pub fn new(m: usize, l: usize, rho2: f64, sigma2: f64) -> Result<Self> {
        if !(rho2 > 0.0) || !(sigma2 > 0.0) {
            return Err(BtfError::InvalidArgument(format!(
                "rho2 = {rho2} and sigma2 = {sigma2} must be positive"
            )));
        }
        Ok(Self {
            columns: (0..m).map(|_| LocalScales::ones(l)).collect(),
            rho2,
            sigma2,
        })
    }
}

/// One retained posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub sweep: usize,
    pub factors: FactorState,
    pub sigma2: f64,
    pub nu2: Option<f64>,
    pub loglik: f64,
}

/// Per-sweep trace entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub sweep: usize,
    pub loglik: f64,
    pub sigma2: f64,
    pub nu2: Option<f64>,
    pub degenerate_steps: u64,
}

/// Draws kept after burn-in, every `thin` sweeps, plus the full sweep trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub snapshots: Vec<Snapshot>,
    pub trace: Vec<TraceRow>,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub degenerate_steps: u64,
}

impl PosteriorSamples {
    /// Number of snapshots a completed run keeps.
    pub fn expected_snapshots(sweeps: usize, burn_in: usize, thin: usize) -> usize {
        sweeps.saturating_sub(burn_in) / thin.max(1)
    }

    /// Whether the draw after `sweep` (0-based) is retained.
    pub fn keeps(sweep: usize, burn_in: usize, thin: usize) -> bool {
        sweep >= burn_in && (sweep - burn_in + 1).is_multiple_of(thin.max(1))
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Posterior mean of `⟨W_i, V_jt⟩` over retained draws.
    pub fn mean_theta(&self) -> Result<Array3<f64>> {
        let first = self
            .snapshots
            .first()
            .ok_or_else(|| BtfError::InsufficientData("no retained samples".into()))?;
        let mut acc = first.factors.theta_all();
        for s in &self.snapshots[1..] {
            acc += &s.factors.theta_all();
        }
        acc /= self.snapshots.len() as f64;
        Ok(acc)
    }

    /// Equal-tailed credible interval of `⟨W_i, V_jt⟩` at `level` for every cell.
    pub fn theta_intervals(&self, level: f64) -> Result<(Array3<f64>, Array3<f64>)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(BtfError::InvalidArgument(format!(
                "level {level} outside (0, 1)"
            )));
        }
        let first = self
            .snapshots
            .first()
            .ok_or_else(|| BtfError::InsufficientData("no retained samples".into()))?;
        let (n, m, t_len, _) = first.factors.dims();
        let thetas: Vec<Array3<f64>> = self.snapshots.iter().map(|s| s.factors.theta_all()).collect();
        let alpha = (1.0 - level) / 2.0;
        let mut lo = Array3::zeros((n, m, t_len));
        let mut hi = Array3::zeros((n, m, t_len));
        let mut buf = Vec::with_capacity(thetas.len());
        for i in 0..n {
            for j in 0..m {
                for t in 0..t_len {
                    buf.clear();
                    buf.extend(thetas.iter().map(|a| a[[i, j, t]]));
                    buf.sort_by(f64::total_cmp);
                    lo[[i, j, t]] = crate::stats::quantile_sorted(&buf, alpha);
                    hi[[i, j, t]] = crate::stats::quantile_sorted(&buf, 1.0 - alpha);
                }
            }
        }
        Ok((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn inner_curve_unit_vector() {
        let w = array![[1.0, 0.0]];
        let mut v = Array3::zeros((1, 3, 2));
        for t in 0..3 {
            v[[0, t, 0]] = t as f64;
        }
        let s = FactorState::new(w, v).unwrap();
        assert_eq!(s.inner_curve(0, 0).unwrap(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn inner_curve_zero_factor() {
        let s = FactorState::new(Array2::zeros((1, 3)), Array3::from_elem((1, 4, 3), 2.5)).unwrap();
        assert!(s.inner_curve(0, 0).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn inner_curve_out_of_range() {
        let s = FactorState::zeros(2, 2, 3, 1);
        assert!(matches!(
            s.inner_curve(2, 0),
            Err(BtfError::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn inner_curve_matches_brute_force() {
        let mut rng = crate::rng::seeded(11);
        let s = FactorState::random(3, 2, 4, 3, 1.0, &mut rng);
        for i in 0..3 {
            for j in 0..2 {
                let c = s.inner_curve(i, j).unwrap();
                for t in 0..4 {
                    let mut e = 0.0;
                    for d in 0..3 {
                        e += s.w[[i, d]] * s.v[[j, t, d]];
                    }
                    assert!((c[t] - e).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn v_curve_is_dose_major() {
        let v = Array3::from_shape_fn((2, 3, 2), |(j, t, d)| (100 * j + 10 * t + d) as f64);
        let s = FactorState::new(Array2::zeros((1, 2)), v).unwrap();
        assert_eq!(s.v_curve(1), &[100.0, 101.0, 110.0, 111.0, 120.0, 121.0]);
        assert_eq!(s.v_point(1, 2), &[120.0, 121.0]);
    }

    #[test]
    fn snapshot_bookkeeping() {
        let kept: Vec<usize> = (0..10).filter(|&s| PosteriorSamples::keeps(s, 4, 2)).collect();
        assert_eq!(kept, vec![5, 7, 9]);
        assert_eq!(PosteriorSamples::expected_snapshots(10, 4, 2), 3);
    }
}
