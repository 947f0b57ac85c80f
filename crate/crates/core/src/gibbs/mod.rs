//! The Gibbs engine: sweeps over rows, columns, shrinkage and global variances.

pub mod als;
pub mod blackbox;
pub mod conjugate;
pub mod dic;
pub mod hyper;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use als::{init_constrained_als, AlsConfig, PseudoEpApprox};
pub use blackbox::{check_feasible, corrected_loglik, update_cols_blackbox, update_rows_blackbox, BlackBoxContext};
pub use conjugate::{
    binomial_terms, gaussian_terms, update_cols_conjugate, update_rows_conjugate, CellTerms,
};
pub use dic::{compute_dic, DicReport};
pub use hyper::{update_nu2, update_shrinkage, update_sigma2, GammaPrior};

use crate::constraints::ConstraintScope;
use crate::error::{BtfError, Result};
use crate::likelihood::LikelihoodSpec;
use crate::model::{FactorState, PosteriorSamples, ShrinkageState, Snapshot, TraceRow};
use crate::rng::{stream_rng, Phase};
use crate::samplers::{GassConfig, ShrinkageUpdate};
use crate::tensor::{CellIndex, ObservationTensor};
use crate::trend::CompositeDiffMatrix;

/// Identifies the random streams of one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepKey {
    pub seed: u64,
    pub sweep: u64,
}

impl SweepKey {
    pub fn rng(&self, phase: Phase, index: u64) -> ChaCha8Rng {
        stream_rng(self.seed, self.sweep, phase, index)
    }
}

/// Sampler settings. The likelihood carries any curve constraints.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub d: usize,
    pub k: usize,
    pub rho2: f64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub likelihood: LikelihoodSpec,
    pub scope: ConstraintScope,
    pub gass: GassConfig,
    pub shrinkage_update: ShrinkageUpdate,
    pub ep_inflation: f64,
    /// Shape GASS proposals with the pseudo-observation surrogate.
    pub pseudo_ep: bool,
    /// Refit the surrogate once when burn-in ends.
    pub refresh_ep_after_burn_in: bool,
    pub als_max_iters: usize,
    pub sigma_prior: GammaPrior,
    pub nu_prior: GammaPrior,
    pub init_sigma2: f64,
    pub update_sigma2: bool,
    pub update_nu2: bool,
    pub update_shrinkage: bool,
}

impl FitConfig {
    pub fn new(d: usize, likelihood: LikelihoodSpec) -> Self {
        Self {
            d,
            k: 0,
            rho2: 0.1,
            sweeps: 4000,
            burn_in: 2000,
            thin: 1,
            seed: 0,
            likelihood,
            scope: ConstraintScope::All,
            gass: GassConfig::default(),
            shrinkage_update: ShrinkageUpdate::Standard,
            ep_inflation: 2.0,
            pseudo_ep: true,
            refresh_ep_after_burn_in: false,
            als_max_iters: 50,
            sigma_prior: GammaPrior::default(),
            nu_prior: GammaPrior::default(),
            init_sigma2: 1.0,
            update_sigma2: true,
            update_nu2: true,
            update_shrinkage: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(BtfError::InvalidArgument(msg));
        if self.d == 0 {
            return bad("D must be at least 1".into());
        }
        if self.thin == 0 {
            return bad("thin must be at least 1".into());
        }
        if self.burn_in >= self.sweeps {
            return bad(format!("burn_in {} must be below sweeps {}", self.burn_in, self.sweeps));
        }
        if !(self.rho2 > 0.0) {
            return bad(format!("rho2 = {} must be positive", self.rho2));
        }
        if !(self.ep_inflation > 0.0) {
            return bad(format!("ep_inflation = {} must be positive", self.ep_inflation));
        }
        if !(self.init_sigma2 > 0.0) {
            return bad(format!("init_sigma2 = {} must be positive", self.init_sigma2));
        }
        self.gass.validate()
    }

    fn is_black_box(&self) -> bool {
        matches!(self.likelihood, LikelihoodSpec::BlackBox { .. })
    }
}

/// Mutable chain state; everything needed to continue a run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub factors: FactorState,
    pub shrinkage: ShrinkageState,
    pub nu2: Option<f64>,
    pub next_sweep: usize,
    pub degenerate_steps: u64,
    pub trace: Vec<TraceRow>,
    pub snapshots: Vec<Snapshot>,
}

/// Serialized sampler state written during long runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub seed: u64,
    pub dims: (usize, usize, usize, usize),
    pub chain: ChainState,
    pub ep: Option<PseudoEpApprox>,
}

/// A configured Gibbs sampler over one observation tensor.
pub struct Sampler {
    cfg: FitConfig,
    dims: (usize, usize, usize, usize),
    index: CellIndex,
    delta: CompositeDiffMatrix,
    pairs: Vec<Vec<bool>>,
    ep: Option<PseudoEpApprox>,
    pseudo_terms: Option<CellTerms>,
    state: ChainState,
    /// Factors returned by the initial fit, kept for diagnostics.
    pub als_objective: Option<f64>,
}

impl Sampler {
    pub fn new(y: &ObservationTensor, cfg: FitConfig) -> Result<Self> {
        cfg.validate()?;
        y.check_coverage()?;
        cfg.likelihood.validate(y)?;
        let (n, m, t_len, _) = y.dims();
        let delta = CompositeDiffMatrix::new(t_len, cfg.k)?;
        let index = y.cell_index();
        let kind = cfg.likelihood.constraints();
        let pairs = blackbox::constrained_pairs(&index, &kind, cfg.scope);
        let mut init_rng = stream_rng(cfg.seed, 0, Phase::Init, 0);

        let mut als_objective = None;
        let (factors, ep) = if cfg.is_black_box() {
            let mut als_cfg = AlsConfig::new(cfg.d);
            als_cfg.max_iters = cfg.als_max_iters;
            als_cfg.inflation = cfg.ep_inflation;
            als_cfg.scope = cfg.scope;
            let ep = init_constrained_als(y, &kind, &als_cfg, None, &mut init_rng)?;
            als_objective = Some(ep.objective);
            (ep.factors.clone(), cfg.pseudo_ep.then_some(ep))
        } else {
            let w = conjugate::sample_rows_prior(n, cfg.d, cfg.init_sigma2, &mut init_rng);
            (FactorState::new(w, ndarray::Array3::zeros((m, t_len, cfg.d)))?, None)
        };
        let shrinkage = ShrinkageState::new(m, delta.n_rows(), cfg.rho2, cfg.init_sigma2)?;
        let nu2 = match cfg.likelihood {
            LikelihoodSpec::Gaussian { nu2 } => Some(nu2),
            _ => None,
        };
        let pseudo_terms = ep.as_ref().map(|e| blackbox::pseudo_terms(&index, e));
        Ok(Self {
            dims: (n, m, t_len, cfg.d),
            cfg,
            index,
            delta,
            pairs,
            ep,
            pseudo_terms,
            state: ChainState {
                factors,
                shrinkage,
                nu2,
                next_sweep: 0,
                degenerate_steps: 0,
                trace: Vec::new(),
                snapshots: Vec::new(),
            },
            als_objective,
        })
    }

    /// Restores a sampler from a checkpoint written by the same data and config.
    pub fn resume(y: &ObservationTensor, cfg: FitConfig, checkpoint: Checkpoint) -> Result<Self> {
        cfg.validate()?;
        y.check_coverage()?;
        cfg.likelihood.validate(y)?;
        let (n, m, t_len, _) = y.dims();
        if checkpoint.seed != cfg.seed || checkpoint.dims != (n, m, t_len, cfg.d) {
            return Err(BtfError::InvalidArgument(
                "checkpoint was written for a different seed or shape".into(),
            ));
        }
        let index = y.cell_index();
        let kind = cfg.likelihood.constraints();
        let pairs = blackbox::constrained_pairs(&index, &kind, cfg.scope);
        let pseudo_terms = checkpoint.ep.as_ref().map(|e| blackbox::pseudo_terms(&index, e));
        Ok(Self {
            dims: checkpoint.dims,
            delta: CompositeDiffMatrix::new(t_len, cfg.k)?,
            cfg,
            index,
            pairs,
            ep: checkpoint.ep,
            pseudo_terms,
            state: checkpoint.chain,
            als_objective: None,
        })
    }

    pub fn config(&self) -> &FitConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut ChainState {
        &mut self.state
    }

    pub fn pseudo_ep(&self) -> Option<&PseudoEpApprox> {
        self.ep.as_ref()
    }

    pub fn index(&self) -> &CellIndex {
        &self.index
    }

    /// Swaps in new observations on the same grid, keeping the chain state.
    /// A pseudo-EP surrogate, if any, is not refit.
    pub fn set_data(&mut self, y: &ObservationTensor) -> Result<()> {
        let (n, m, t_len, _) = y.dims();
        if (n, m, t_len) != (self.dims.0, self.dims.1, self.dims.2) {
            return Err(BtfError::ShapeMismatch(format!(
                "data of shape {n}x{m}x{t_len} for a {}x{}x{} sampler",
                self.dims.0, self.dims.1, self.dims.2
            )));
        }
        y.check_coverage()?;
        self.cfg.likelihood.validate(y)?;
        self.index = y.cell_index();
        let kind = self.cfg.likelihood.constraints();
        self.pairs = blackbox::constrained_pairs(&self.index, &kind, self.cfg.scope);
        self.pseudo_terms = self.ep.as_ref().map(|e| blackbox::pseudo_terms(&self.index, e));
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            seed: self.cfg.seed,
            dims: self.dims,
            chain: self.state.clone(),
            ep: self.ep.clone(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.state.next_sweep >= self.cfg.sweeps
    }

    /// Log-likelihood of all observed cells at the current state.
    pub fn loglik(&self) -> f64 {
        let f = &self.state.factors;
        self.index
            .cells
            .iter()
            .map(|c| self.cfg.likelihood.cell_loglik(c, f.theta(c.row, c.col, c.dose), self.state.nu2))
            .sum()
    }

    fn refresh_ep(&mut self) -> Result<()> {
        let kind = self.cfg.likelihood.constraints();
        let mut als_cfg = AlsConfig::new(self.cfg.d);
        als_cfg.max_iters = self.cfg.als_max_iters;
        als_cfg.inflation = self.cfg.ep_inflation;
        als_cfg.scope = self.cfg.scope;
        let y = self.observed_tensor()?;
        let mut rng = stream_rng(self.cfg.seed, self.state.next_sweep as u64, Phase::Init, 1);
        let ep = init_constrained_als(&y, &kind, &als_cfg, Some(self.state.factors.clone()), &mut rng)?;
        self.pseudo_terms = Some(blackbox::pseudo_terms(&self.index, &ep));
        self.ep = Some(ep);
        Ok(())
    }

    fn observed_tensor(&self) -> Result<ObservationTensor> {
        let records = self.index.cells.iter().flat_map(|c| {
            c.values
                .iter()
                .enumerate()
                .map(move |(r, &v)| (c.row, c.col, c.dose, r, v))
        });
        let (n, m, t_len, _) = self.dims;
        let max_r = self.index.cells.iter().map(|c| c.values.len()).max().unwrap_or(1);
        let mut values = ndarray::Array4::zeros((n, m, t_len, max_r));
        let mut mask = ndarray::Array4::from_elem((n, m, t_len, max_r), false);
        for (i, j, t, r, v) in records {
            values[[i, j, t, r]] = v;
            mask[[i, j, t, r]] = true;
        }
        ObservationTensor::new(values, mask)
    }

    /// Runs one full sweep: rows, columns, shrinkage, then global variances.
    pub fn sweep(&mut self) -> Result<()> {
        let s = self.state.next_sweep;
        let key = SweepKey {
            seed: self.cfg.seed,
            sweep: s as u64,
        };
        if self.cfg.refresh_ep_after_burn_in && self.cfg.pseudo_ep && self.cfg.is_black_box() && s == self.cfg.burn_in {
            self.refresh_ep()?;
        }
        let sigma2 = self.state.shrinkage.sigma2;
        match &self.cfg.likelihood {
            LikelihoodSpec::Gaussian { .. } => {
                let nu2 = self.state.nu2.expect("Gaussian chains track nu2");
                let terms = gaussian_terms(&self.index, nu2);
                update_rows_conjugate(&self.index, &terms, &mut self.state.factors, sigma2, key)?;
                update_cols_conjugate(
                    &self.index,
                    &terms,
                    &mut self.state.factors,
                    &self.state.shrinkage,
                    &self.delta,
                    key,
                )?;
            }
            LikelihoodSpec::Binomial { trials } => {
                let terms = binomial_terms(&self.index, trials, &self.state.factors, key, 0)?;
                update_rows_conjugate(&self.index, &terms, &mut self.state.factors, sigma2, key)?;
                let terms = binomial_terms(&self.index, trials, &self.state.factors, key, 1)?;
                update_cols_conjugate(
                    &self.index,
                    &terms,
                    &mut self.state.factors,
                    &self.state.shrinkage,
                    &self.delta,
                    key,
                )?;
            }
            LikelihoodSpec::BlackBox { lik, constraints } => {
                let ctx = BlackBoxContext {
                    index: &self.index,
                    lik: lik.as_ref(),
                    kind: *constraints,
                    pairs: &self.pairs,
                    ep: self.ep.as_ref(),
                    pseudo_terms: self.pseudo_terms.as_ref(),
                    gass: self.cfg.gass,
                };
                let mut deg = update_rows_blackbox(&ctx, &mut self.state.factors, sigma2, key)?;
                deg += update_cols_blackbox(
                    &ctx,
                    &mut self.state.factors,
                    &self.state.shrinkage,
                    &self.delta,
                    key,
                )?;
                self.state.degenerate_steps += deg;
                if cfg!(debug_assertions) {
                    check_feasible(&self.state.factors, constraints, &self.pairs)?;
                }
            }
        }
        if self.cfg.update_shrinkage {
            update_shrinkage(
                &self.state.factors,
                &mut self.state.shrinkage,
                &self.delta,
                self.cfg.shrinkage_update,
                key,
            )?;
        }
        if self.cfg.update_sigma2 {
            let mut rng = key.rng(Phase::Globals, 0);
            self.state.shrinkage.sigma2 = update_sigma2(&self.state.factors.w, &self.cfg.sigma_prior, &mut rng)?;
        }
        if let (Some(_), true) = (self.state.nu2, self.cfg.update_nu2) {
            let f = &self.state.factors;
            let mut ss = 0.0;
            let mut count = 0;
            for c in &self.index.cells {
                let th = f.theta(c.row, c.col, c.dose);
                ss += c.values.iter().map(|y| (y - th).powi(2)).sum::<f64>();
                count += c.values.len();
            }
            let mut rng = key.rng(Phase::Globals, 1);
            self.state.nu2 = Some(update_nu2(ss, count, &self.cfg.nu_prior, &mut rng)?);
        }

        let loglik = self.loglik();
        self.state.trace.push(TraceRow {
            sweep: s,
            loglik,
            sigma2: self.state.shrinkage.sigma2,
            nu2: self.state.nu2,
            degenerate_steps: self.state.degenerate_steps,
        });
        if PosteriorSamples::keeps(s, self.cfg.burn_in, self.cfg.thin) {
            self.state.snapshots.push(Snapshot {
                sweep: s,
                factors: self.state.factors.clone(),
                sigma2: self.state.shrinkage.sigma2,
                nu2: self.state.nu2,
                loglik,
            });
        }
        self.state.next_sweep += 1;
        Ok(())
    }

    /// Sweeps until done, calling `on_checkpoint` every `every` sweeps.
    pub fn run_with_checkpoints<F>(&mut self, every: usize, mut on_checkpoint: F) -> Result<()>
    where
        F: FnMut(&Checkpoint) -> Result<()>,
    {
        while !self.is_done() {
            self.sweep()?;
            if every > 0 && self.state.next_sweep.is_multiple_of(every) && !self.is_done() {
                on_checkpoint(&self.checkpoint())?;
            }
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_with_checkpoints(0, |_| Ok(()))
    }

    pub fn into_samples(self) -> PosteriorSamples {
        PosteriorSamples {
            snapshots: self.state.snapshots,
            trace: self.state.trace,
            sweeps: self.cfg.sweeps,
            burn_in: self.cfg.burn_in,
            thin: self.cfg.thin,
            degenerate_steps: self.state.degenerate_steps,
        }
    }
}

/// Runs the full chain and returns the retained draws.
pub fn fit(y: &ObservationTensor, cfg: FitConfig) -> Result<PosteriorSamples> {
    let mut sampler = Sampler::new(y, cfg)?;
    sampler.run()?;
    Ok(sampler.into_samples())
}

/// Row-factor prior draw, exposed for forward simulation.
pub fn sample_rows_prior<R: rand::Rng + ?Sized>(n: usize, d: usize, sigma2: f64, rng: &mut R) -> Array2<f64> {
    conjugate::sample_rows_prior(n, d, sigma2, rng)
}
