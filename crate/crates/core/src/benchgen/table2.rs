//! Held-out evaluation on the Poisson dynamical-system benchmark.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{gen_poisson_dynsys, log_mean_exp, mae, rmse, PoissonDynSysInstance};
use crate::constraints::ConstraintKind;
use crate::error::{BtfError, Result};
use crate::gibbs::{FitConfig, Sampler};
use crate::likelihood::{LikelihoodSpec, PoissonLik};
use crate::model::PosteriorSamples;
use crate::rng::{stream_rng, Phase};
use crate::stats::{mean, std_error};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table2Config {
    pub n: usize,
    pub m: usize,
    pub t: usize,
    pub d: usize,
    pub holdout: (usize, usize),
    pub burn_in: usize,
    pub samples: usize,
    pub rho2: f64,
    pub k: usize,
    pub seed: u64,
}

impl Default for Table2Config {
    fn default() -> Self {
        Self {
            n: 11,
            m: 12,
            t: 20,
            d: 3,
            holdout: (3, 3),
            burn_in: 2000,
            samples: 2000,
            rho2: 0.1,
            k: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table2Trial {
    pub nll: f64,
    pub mae: f64,
    pub rmse: f64,
    pub degenerate_steps: u64,
}

fn poisson_logpmf(y: f64, rate: f64) -> f64 {
    if rate <= 0.0 {
        return if y == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    y * rate.ln() - rate - ln_gamma(y + 1.0)
}

/// Scores retained draws on the held-out cells of `inst`.
pub fn score_holdout(samples: &PosteriorSamples, inst: &PoissonDynSysInstance) -> Result<(f64, f64, f64)> {
    let thetas: Vec<_> = samples.snapshots.iter().map(|s| s.factors.theta_all()).collect();
    if thetas.is_empty() {
        return Err(BtfError::InsufficientData("no retained samples".into()));
    }
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    let mut nll = 0.0;
    for (k, _) in inst.holdout.indexed_iter().filter(|(_, h)| **h) {
        let draws: Vec<f64> = thetas.iter().map(|th| th[k]).collect();
        pred.push(mean(&draws));
        truth.push(inst.rate[k]);
        let lp: Vec<f64> = draws.iter().map(|&r| poisson_logpmf(inst.y[k], r)).collect();
        nll -= log_mean_exp(&lp);
    }
    Ok((nll, mae(&pred, &truth)?, rmse(&pred, &truth)?))
}

pub fn run_trial(cfg: &Table2Config, trial: u64) -> Result<Table2Trial> {
    let mut rng = stream_rng(cfg.seed, trial, Phase::Generate, 0);
    let inst = gen_poisson_dynsys(cfg.n, cfg.m, cfg.t, cfg.d, cfg.holdout, &mut rng)?;
    let y = inst.observed()?;
    let mut fc = FitConfig::new(
        cfg.d,
        LikelihoodSpec::black_box(PoissonLik, ConstraintKind::positive()),
    );
    fc.k = cfg.k;
    fc.rho2 = cfg.rho2;
    fc.burn_in = cfg.burn_in;
    fc.sweeps = cfg.burn_in + cfg.samples;
    fc.seed = cfg.seed ^ (trial.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut sampler = Sampler::new(&y, fc)?;
    sampler.run()?;
    let samples = sampler.into_samples();
    let (nll, mae, rmse) = score_holdout(&samples, &inst)?;
    Ok(Table2Trial {
        nll,
        mae,
        rmse,
        degenerate_steps: samples.degenerate_steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Report {
    pub config: Table2Config,
    pub trials: Vec<Table2Trial>,
    pub failures: usize,
}

impl Table2Report {
    fn column(&self, f: impl Fn(&Table2Trial) -> f64) -> (f64, Option<f64>) {
        let v: Vec<f64> = self.trials.iter().map(f).collect();
        (mean(&v), std_error(&v))
    }

    pub fn mae(&self) -> (f64, Option<f64>) {
        self.column(|t| t.mae)
    }

    pub fn rmse(&self) -> (f64, Option<f64>) {
        self.column(|t| t.rmse)
    }

    pub fn nll(&self) -> (f64, Option<f64>) {
        self.column(|t| t.nll)
    }
}

fn pm((m, se): (f64, Option<f64>)) -> String {
    match se {
        Some(se) => format!("{m:.2} ± {se:.2}"),
        None => format!("{m:.2} ± n/a"),
    }
}

impl fmt::Display for Table2Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(
            f,
            "{}x{}x{} tensor, {}x{}x{} held out, {} + {} sweeps, {} trials ({} failed)",
            c.n, c.m, c.t, c.holdout.0, c.holdout.1, c.t, c.burn_in, c.samples,
            self.trials.len() + self.failures,
            self.failures
        )?;
        writeln!(f, "{:<8}{:>18}{:>14}{:>14}", "Model", "NLL", "MAE", "RMSE")?;
        writeln!(f, "{:<8}{:>18}{:>14}{:>14}", "BTF", pm(self.nll()), pm(self.mae()), pm(self.rmse()))
    }
}

/// Trials run one after another; each fit parallelizes internally.
pub fn run_table2(cfg: &Table2Config, trials: usize) -> Result<Table2Report> {
    if trials == 0 {
        return Err(BtfError::InvalidArgument("trials must be at least 1".into()));
    }
    let mut out = Vec::new();
    let mut failures = 0;
    for t in 0..trials as u64 {
        match run_trial(cfg, t) {
            Ok(r) => out.push(r),
            Err(_) => failures += 1,
        }
    }
    Ok(Table2Report {
        config: *cfg,
        trials: out,
        failures,
    })
}
