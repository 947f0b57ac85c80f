//! Observation models evaluated per observed `(row, col, dose)` cell.

use std::fmt;
use std::sync::Arc;

use ndarray::Array3;
use statrs::function::gamma::ln_gamma;

use crate::constraints::ConstraintKind;
use crate::error::{BtfError, Result};
use crate::tensor::{ObservationTensor, ObservedCell};

/// Log-density of all replicates of one cell given `θ = ⟨w_i, v_jt⟩`.
///
/// Implementations must be pure; the engine calls them from parallel row and
/// column updates.
pub trait CellLikelihood: Send + Sync {
    fn log_lik(&self, cell: &ObservedCell, theta: f64) -> f64;

    fn name(&self) -> &str;

    /// Rejects data the model cannot explain at any parameter value.
    fn validate(&self, _y: &ObservationTensor) -> Result<()> {
        Ok(())
    }
}

/// `y ~ N(θ, ν²)` per replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLik {
    pub nu2: f64,
}

pub fn gaussian_log_density(y: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (y - mean) * (y - mean) / var)
}

impl CellLikelihood for GaussianLik {
    fn log_lik(&self, cell: &ObservedCell, theta: f64) -> f64 {
        cell.values
            .iter()
            .map(|&y| gaussian_log_density(y, theta, self.nu2))
            .sum()
    }

    fn name(&self) -> &str {
        "gaussian"
    }
}

/// `y ~ Poisson(θ)` per replicate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoissonLik;

impl CellLikelihood for PoissonLik {
    fn log_lik(&self, cell: &ObservedCell, theta: f64) -> f64 {
        if theta < 0.0 || !theta.is_finite() {
            return f64::NEG_INFINITY;
        }
        let mut s = 0.0;
        for &y in &cell.values {
            if theta == 0.0 {
                if y != 0.0 {
                    return f64::NEG_INFINITY;
                }
                continue;
            }
            s += y * theta.ln() - theta - ln_gamma(y + 1.0);
        }
        s
    }

    fn name(&self) -> &str {
        "poisson"
    }

    fn validate(&self, y: &ObservationTensor) -> Result<()> {
        for r in y.to_long() {
            if r.value < 0.0 || r.value.fract() != 0.0 {
                return Err(BtfError::InvalidArgument(format!(
                    "Poisson count {} at ({}, {}, {}, {}) is not a non-negative integer",
                    r.value, r.row, r.col, r.dose, r.replicate
                )));
            }
        }
        Ok(())
    }
}

/// `y ~ Bin(n_ijt, σ(θ))` per replicate, with the logistic link.
#[derive(Debug, Clone, PartialEq)]
pub struct BinomialLik {
    pub trials: Array3<u64>,
}

impl BinomialLik {
    pub fn trials_at(&self, cell: &ObservedCell) -> f64 {
        self.trials[[cell.row, cell.col, cell.dose]] as f64
    }
}

/// `log σ(θ)` without overflow.
pub fn log_sigmoid(theta: f64) -> f64 {
    if theta >= 0.0 {
        -(-theta).exp().ln_1p()
    } else {
        theta - theta.exp().ln_1p()
    }
}

fn ln_choose(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

impl CellLikelihood for BinomialLik {
    fn log_lik(&self, cell: &ObservedCell, theta: f64) -> f64 {
        let n = self.trials_at(cell);
        let (lp, lq) = (log_sigmoid(theta), log_sigmoid(-theta));
        cell.values
            .iter()
            .map(|&y| ln_choose(n, y) + y * lp + (n - y) * lq)
            .sum()
    }

    fn name(&self) -> &str {
        "binomial"
    }

    fn validate(&self, y: &ObservationTensor) -> Result<()> {
        let (n, m, t, _) = y.dims();
        if self.trials.dim() != (n, m, t) {
            return Err(BtfError::ShapeMismatch(format!(
                "trials array {:?} for tensor {:?}",
                self.trials.dim(),
                (n, m, t)
            )));
        }
        for r in y.to_long() {
            let trials = self.trials[[r.row, r.col, r.dose]] as f64;
            if r.value < 0.0 || r.value.fract() != 0.0 || r.value > trials {
                return Err(BtfError::InvalidArgument(format!(
                    "binomial count {} at ({}, {}, {}, {}) outside 0..={trials}",
                    r.value, r.row, r.col, r.dose, r.replicate
                )));
            }
        }
        Ok(())
    }
}

/// The three update families of the engine.
#[derive(Clone)]
pub enum LikelihoodSpec {
    /// Conjugate updates; `nu2` is the initial noise variance.
    Gaussian { nu2: f64 },
    /// Pólya–Gamma augmented updates.
    Binomial { trials: Array3<u64> },
    /// Slice-sampled updates under linear constraints on every curve.
    BlackBox {
        lik: Arc<dyn CellLikelihood>,
        constraints: ConstraintKind,
    },
}

impl fmt::Debug for LikelihoodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian { nu2 } => f.debug_struct("Gaussian").field("nu2", nu2).finish(),
            Self::Binomial { trials } => f
                .debug_struct("Binomial")
                .field("trials", &trials.dim())
                .finish(),
            Self::BlackBox { lik, constraints } => f
                .debug_struct("BlackBox")
                .field("lik", &lik.name())
                .field("constraints", constraints)
                .finish(),
        }
    }
}

impl LikelihoodSpec {
    pub fn black_box<L: CellLikelihood + 'static>(lik: L, constraints: ConstraintKind) -> Self {
        Self::BlackBox {
            lik: Arc::new(lik),
            constraints,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Gaussian { .. } => "gaussian".into(),
            Self::Binomial { .. } => "binomial".into(),
            Self::BlackBox { lik, .. } => lik.name().to_string(),
        }
    }

    pub fn constraints(&self) -> ConstraintKind {
        match self {
            Self::BlackBox { constraints, .. } => *constraints,
            _ => ConstraintKind::none(),
        }
    }

    pub fn validate(&self, y: &ObservationTensor) -> Result<()> {
        match self {
            Self::Gaussian { nu2 } => {
                if !(*nu2 > 0.0) {
                    return Err(BtfError::InvalidArgument(format!("nu2 = {nu2} must be positive")));
                }
                Ok(())
            }
            Self::Binomial { trials } => BinomialLik {
                trials: trials.clone(),
            }
            .validate(y),
            Self::BlackBox { lik, .. } => lik.validate(y),
        }
    }

    /// Log-likelihood of one cell; `nu2` is the current noise variance for the
    /// Gaussian family and ignored otherwise.
    pub fn cell_loglik(&self, cell: &ObservedCell, theta: f64, nu2: Option<f64>) -> f64 {
        match self {
            Self::Gaussian { nu2: init } => GaussianLik {
                nu2: nu2.unwrap_or(*init),
            }
            .log_lik(cell, theta),
            Self::Binomial { trials } => {
                let n = trials[[cell.row, cell.col, cell.dose]] as f64;
                let (lp, lq) = (log_sigmoid(theta), log_sigmoid(-theta));
                cell.values
                    .iter()
                    .map(|&y| ln_choose(n, y) + y * lp + (n - y) * lq)
                    .sum()
            }
            Self::BlackBox { lik, .. } => lik.log_lik(cell, theta),
        }
    }
}
