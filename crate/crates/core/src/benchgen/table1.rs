//! Constrained-MVN benchmark: GASS against rejection, logistic and projection
//! variants of elliptical slice sampling.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gen_gass_benchmark, mse, GassBenchParams, GassBenchmarkInstance};
use crate::constraints::{ConstraintKind, ConstraintSet, Monotone};
use crate::error::{BtfError, Result};
use crate::linalg::BandedSym;
use crate::rng::{stream_rng, Phase};
use crate::samplers::{ess_step, gass_step, pav_monotone_projection, GassConfig, MvnPrior};
use crate::stats::{mean, quantile_sorted, std_error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rs,
    Lrs,
    Pp,
    Lpp,
    Gass,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Rs, Method::Lrs, Method::Pp, Method::Lpp, Method::Gass];

    pub fn label(&self) -> &'static str {
        match self {
            Method::Rs => "RS",
            Method::Lrs => "LRS",
            Method::Pp => "PP",
            Method::Lpp => "LPP",
            Method::Gass => "GASS",
        }
    }

    fn stream(&self) -> u64 {
        *self as u64
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Per-trial scores of one method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub mse: f64,
    pub coverage: f64,
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// PAV onto nonincreasing curves, then clip into the box.
fn project(theta: &[f64], kind: &ConstraintKind) -> Result<Vec<f64>> {
    let lo = kind.lower.unwrap_or(f64::NEG_INFINITY);
    let hi = kind.upper.unwrap_or(f64::INFINITY);
    Ok(pav_monotone_projection(theta, Monotone::Nonincreasing)?
        .into_iter()
        .map(|x| x.clamp(lo, hi))
        .collect())
}

/// Runs `2m` steps of `method` on `inst` and returns the last `m` curves on
/// the `θ` scale, projected where the method calls for it. The logistic
/// variants put the benchmark's `MVN(μ, Σ)` on the logits. Every chain starts
/// at the curve `μ`.
pub fn sample_method(
    method: Method,
    inst: &GassBenchmarkInstance,
    m: usize,
    gass: &GassConfig,
    seed: u64,
    trial: u64,
) -> Result<Vec<Vec<f64>>> {
    let params = &inst.params;
    let kind = params.constraints();
    let cov = BandedSym::from_dense(&params.covariance());
    let mu = super::GASS_BENCH_MEAN.to_vec();
    let mut rng = stream_rng(seed, trial, Phase::Rows, method.stream());
    let mut out = Vec::with_capacity(m);
    let keep = |s: usize| s >= m;
    match method {
        Method::Gass => {
            let prior = MvnPrior::from_covariance(mu.clone(), &cov)?;
            let cons = ConstraintSet::for_curve(&kind, mu.len());
            let lik = |x: &[f64]| inst.loglik(x);
            let mut x = mu;
            for s in 0..2 * m {
                x = gass_step(&x, &prior, &lik, &cons, gass, &mut rng)?.x;
                if keep(s) {
                    out.push(x.clone());
                }
            }
        }
        Method::Rs | Method::Pp => {
            let prior = MvnPrior::from_covariance(mu.clone(), &cov)?;
            let fold = method == Method::Rs;
            let lik = |x: &[f64]| {
                if fold && !kind.curve_feasible(x) {
                    f64::NEG_INFINITY
                } else {
                    inst.loglik(x)
                }
            };
            let mut x = mu;
            for s in 0..2 * m {
                x = ess_step(&x, &prior, &lik, &mut rng)?;
                if keep(s) {
                    out.push(if fold { x.clone() } else { project(&x, &kind)? });
                }
            }
        }
        Method::Lrs | Method::Lpp => {
            let z0: Vec<f64> = mu.iter().map(|&p| logit(p)).collect();
            let prior = MvnPrior::from_covariance(mu, &cov)?;
            let fold = method == Method::Lrs;
            let lik = |z: &[f64]| {
                let theta: Vec<f64> = z.iter().map(|&v| logistic(v)).collect();
                if fold && !kind.curve_feasible(&theta) {
                    f64::NEG_INFINITY
                } else {
                    inst.loglik(&theta)
                }
            };
            let mut z = z0;
            for s in 0..2 * m {
                z = ess_step(&z, &prior, &lik, &mut rng)?;
                if keep(s) {
                    let theta: Vec<f64> = z.iter().map(|&v| logistic(v)).collect();
                    out.push(if fold { theta } else { project(&theta, &kind)? });
                }
            }
        }
    }
    Ok(out)
}

/// Posterior-mean MSE and central 90% interval coverage of the true curve.
pub fn score(draws: &[Vec<f64>], truth: &[f64]) -> Result<TrialScore> {
    if draws.is_empty() {
        return Err(BtfError::InsufficientData("no retained draws".into()));
    }
    let n = truth.len();
    let mut post_mean = vec![0.0; n];
    let mut hits = 0;
    for i in 0..n {
        let mut col: Vec<f64> = draws.iter().map(|d| d[i]).collect();
        post_mean[i] = mean(&col);
        col.sort_by(f64::total_cmp);
        let (lo, hi) = (quantile_sorted(&col, 0.05), quantile_sorted(&col, 0.95));
        if lo <= truth[i] && truth[i] <= hi {
            hits += 1;
        }
    }
    Ok(TrialScore {
        mse: mse(&post_mean, truth)?,
        coverage: hits as f64 / n as f64,
    })
}

/// One trial of one method: fresh data keyed by `(seed, trial)`, shared by
/// every method so comparisons are paired.
pub fn run_trial(method: Method, m: usize, gass: &GassConfig, seed: u64, trial: u64) -> Result<TrialScore> {
    let params = GassBenchParams::default();
    let inst = gen_gass_benchmark(&params, &mut stream_rng(seed, trial, Phase::Generate, 0))?;
    let draws = sample_method(method, &inst, m, gass, seed, trial)?;
    score(&draws, &inst.theta_true)
}

/// Mean ± standard error of a method across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mse_mean: f64,
    pub mse_se: Option<f64>,
    pub coverage_mean: f64,
    pub coverage_se: Option<f64>,
    pub trials: Vec<TrialScore>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<MethodSummary>,
}

impl Table1Report {
    pub fn row(&self, method: Method) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.method == method)
    }
}

fn pm(mean: f64, se: Option<f64>, scale: f64) -> String {
    match se {
        Some(se) => format!("{:.2} ± {:.2}", mean * scale, se * scale),
        None => format!("{:.2} ± n/a", mean * scale),
    }
}

impl fmt::Display for Table1Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "m = {}, {} trials", self.m, self.trials)?;
        writeln!(f, "{:<8}{:>20}{:>20}{:>10}", "Sampler", "MSE (x10^3)", "90% coverage", "failed")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<8}{:>20}{:>20}{:>10}",
                r.method.label(),
                pm(r.mse_mean, r.mse_se, 1e3),
                pm(r.coverage_mean, r.coverage_se, 1.0),
                r.failures
            )?;
        }
        Ok(())
    }
}

/// Runs every `(method, trial)` pair in parallel and aggregates; failed
/// trials are counted and excluded.
pub fn run_table1(methods: &[Method], m: usize, trials: usize, gass: &GassConfig, seed: u64) -> Result<Table1Report> {
    if trials == 0 || m == 0 {
        return Err(BtfError::InvalidArgument("trials and m must be at least 1".into()));
    }
    gass.validate()?;
    let jobs: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|&me| (0..trials as u64).map(move |t| (me, t)))
        .collect();
    let results: Vec<(Method, Result<TrialScore>)> = jobs
        .par_iter()
        .map(|&(me, t)| (me, run_trial(me, m, gass, seed, t)))
        .collect();
    let rows = methods
        .iter()
        .map(|&me| {
            let mut scores = Vec::new();
            let mut failures = 0;
            for (_, r) in results.iter().filter(|(x, _)| *x == me) {
                match r {
                    Ok(s) => scores.push(*s),
                    Err(_) => failures += 1,
                }
            }
            let mses: Vec<f64> = scores.iter().map(|s| s.mse).collect();
            let covs: Vec<f64> = scores.iter().map(|s| s.coverage).collect();
            MethodSummary {
                method: me,
                mse_mean: mean(&mses),
                mse_se: std_error(&mses),
                coverage_mean: mean(&covs),
                coverage_se: std_error(&covs),
                trials: scores,
                failures,
            }
        })
        .collect();
    Ok(Table1Report { m, trials, seed, rows })
}
