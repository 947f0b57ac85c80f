//! TOML run configuration and its translation into a [`FitConfig`].

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use btf_core::dose::PipettingPriorConfig;
use btf_core::{ConstraintKind, ConstraintScope, FitConfig, GammaPrior, GassConfig, Monotone, ShrinkageUpdate};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodKind {
    Gaussian,
    Binomial,
    Poisson,
    GammaMixture,
}

impl LikelihoodKind {
    pub fn is_black_box(&self) -> bool {
        matches!(self, Self::Poisson | Self::GammaMixture)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonotoneSetting {
    None,
    Nonincreasing,
    Nondecreasing,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub likelihood: Option<LikelihoodKind>,
    pub d: Option<usize>,
    pub k: Option<usize>,
    pub rho2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub sweeps: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub grid_size: Option<usize>,
    pub shrinkage_update: Option<ShrinkageUpdate>,
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsSection {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub monotone: Option<MonotoneSetting>,
    pub scope: Option<ConstraintScope>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudoEpSection {
    pub enabled: Option<bool>,
    pub inflation: Option<f64>,
    pub refresh_after_burn_in: Option<bool>,
    pub als_max_iters: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorsSection {
    pub sigma_shape: Option<f64>,
    pub sigma_rate: Option<f64>,
    pub nu_shape: Option<f64>,
    pub nu_rate: Option<f64>,
    pub init_sigma2: Option<f64>,
    pub init_nu2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Binomial trials shared by every cell.
    pub trials: Option<u64>,
    /// Per-cell binomial trials, `row,col,dose,value`.
    pub trials_file: Option<PathBuf>,
    /// Gamma mixture JSON for `gamma-mixture` fits on long-format data.
    pub mixture: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipettingSection {
    pub bins: Option<usize>,
    pub components: Option<usize>,
    pub min_plates: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Central credible level of the curve summary.
    pub level: Option<f64>,
}

/// The whole file. Every section is optional; required keys are checked by
/// [`RunConfig::resolve`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub constraints: ConstraintsSection,
    #[serde(default)]
    pub pseudo_ep: PseudoEpSection,
    #[serde(default)]
    pub priors: PriorsSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub pipetting: PipettingSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Validated settings with defaults filled in. Relative data paths are
/// resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub likelihood: LikelihoodKind,
    pub d: usize,
    pub k: usize,
    pub rho2: f64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub grid_size: usize,
    pub shrinkage_update: ShrinkageUpdate,
    pub checkpoint_every: usize,
    pub constraints: ConstraintKind,
    pub scope: ConstraintScope,
    pub pseudo_ep: bool,
    pub ep_inflation: f64,
    pub refresh_ep_after_burn_in: bool,
    pub als_max_iters: usize,
    pub sigma_prior: GammaPrior,
    pub nu_prior: GammaPrior,
    pub init_sigma2: f64,
    pub init_nu2: f64,
    pub trials: Option<u64>,
    pub trials_file: Option<PathBuf>,
    pub mixture: Option<PathBuf>,
    pub pipetting: PipettingPriorConfig,
    pub level: f64,
}

fn required<T: Copy>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| anyhow!("missing required config key `{key}`"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid config")
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Ok((Self::parse(&text).with_context(|| path.display().to_string())?, text))
    }

    pub fn resolve(&self, base: &Path) -> Result<Resolved> {
        let likelihood = required(self.model.likelihood, "model.likelihood")?;
        let d = required(self.model.d, "model.d")?;
        let sweeps = required(self.sampler.sweeps, "sampler.sweeps")?;
        let burn_in = required(self.sampler.burn_in, "sampler.burn_in")?;
        let c = &self.constraints;
        let any_constraint = c.lower.is_some() || c.upper.is_some() || c.monotone.is_some_and(|m| m != MonotoneSetting::None);
        if any_constraint && !likelihood.is_black_box() {
            bail!("[constraints] need a poisson or gamma-mixture likelihood; {likelihood:?} fits are unconstrained");
        }
        let default_kind = match likelihood {
            LikelihoodKind::Poisson => ConstraintKind::positive(),
            LikelihoodKind::GammaMixture => ConstraintKind::unit_interval(true),
            _ => ConstraintKind::none(),
        };
        let constraints = ConstraintKind {
            lower: c.lower.or(default_kind.lower),
            upper: c.upper.or(default_kind.upper),
            monotone: match c.monotone {
                None => default_kind.monotone,
                Some(MonotoneSetting::None) => None,
                Some(MonotoneSetting::Nonincreasing) => Some(Monotone::Nonincreasing),
                Some(MonotoneSetting::Nondecreasing) => Some(Monotone::Nondecreasing),
            },
        };
        if let (Some(lo), Some(hi)) = (constraints.lower, constraints.upper) {
            if lo >= hi {
                bail!("constraints.lower = {lo} must be below constraints.upper = {hi}");
            }
        }
        if likelihood == LikelihoodKind::Binomial && self.data.trials.is_none() && self.data.trials_file.is_none() {
            bail!("missing required config key `data.trials` (or `data.trials_file`) for a binomial fit");
        }
        let rel = |p: &Option<PathBuf>| p.as_ref().map(|p| base.join(p));
        let pd = PipettingPriorConfig::default();
        let p = &self.priors;
        let r = Resolved {
            likelihood,
            d,
            k: self.model.k.unwrap_or(0),
            rho2: self.model.rho2.unwrap_or(0.1),
            sweeps,
            burn_in,
            thin: self.sampler.thin.unwrap_or(1),
            grid_size: self.sampler.grid_size.unwrap_or(GassConfig::default().grid_size),
            shrinkage_update: self.sampler.shrinkage_update.unwrap_or_default(),
            checkpoint_every: self.sampler.checkpoint_every.unwrap_or(500),
            constraints,
            scope: c.scope.unwrap_or_default(),
            pseudo_ep: self.pseudo_ep.enabled.unwrap_or(true),
            ep_inflation: self.pseudo_ep.inflation.unwrap_or(2.0),
            refresh_ep_after_burn_in: self.pseudo_ep.refresh_after_burn_in.unwrap_or(false),
            als_max_iters: self.pseudo_ep.als_max_iters.unwrap_or(50),
            sigma_prior: GammaPrior {
                shape: p.sigma_shape.unwrap_or(0.1),
                rate: p.sigma_rate.unwrap_or(0.1),
            },
            nu_prior: GammaPrior {
                shape: p.nu_shape.unwrap_or(0.1),
                rate: p.nu_rate.unwrap_or(0.1),
            },
            init_sigma2: p.init_sigma2.unwrap_or(1.0),
            init_nu2: p.init_nu2.unwrap_or(1.0),
            trials: self.data.trials,
            trials_file: rel(&self.data.trials_file),
            mixture: rel(&self.data.mixture),
            pipetting: PipettingPriorConfig {
                bins: self.pipetting.bins.unwrap_or(pd.bins),
                components: self.pipetting.components.unwrap_or(pd.components),
                min_plates: self.pipetting.min_plates.unwrap_or(pd.min_plates),
            },
            level: self.output.level.unwrap_or(0.9),
        };
        if !(r.level > 0.0 && r.level < 1.0) {
            bail!("output.level = {} must be in (0, 1)", r.level);
        }
        Ok(r)
    }
}

impl Resolved {
    /// Sampler settings for `likelihood`, which the caller builds from the data.
    pub fn fit_config(&self, likelihood: btf_core::LikelihoodSpec, seed: u64) -> FitConfig {
        let mut fc = FitConfig::new(self.d, likelihood);
        fc.k = self.k;
        fc.rho2 = self.rho2;
        fc.sweeps = self.sweeps;
        fc.burn_in = self.burn_in;
        fc.thin = self.thin;
        fc.seed = seed;
        fc.scope = self.scope;
        fc.gass.grid_size = self.grid_size;
        fc.shrinkage_update = self.shrinkage_update;
        fc.ep_inflation = self.ep_inflation;
        fc.pseudo_ep = self.pseudo_ep;
        fc.refresh_ep_after_burn_in = self.refresh_ep_after_burn_in;
        fc.als_max_iters = self.als_max_iters;
        fc.sigma_prior = self.sigma_prior;
        fc.nu_prior = self.nu_prior;
        fc.init_sigma2 = self.init_sigma2;
        fc
    }

    /// Applies one grid axis value. Keys follow the config names.
    pub fn set_axis(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: &dyn std::fmt::Display| anyhow!("grid value {key}={value}: {e}");
        match key.to_ascii_lowercase().as_str() {
            "rho2" => self.rho2 = value.parse().map_err(|e| bad(&e))?,
            "d" => self.d = value.parse().map_err(|e| bad(&e))?,
            "k" => self.k = value.parse().map_err(|e| bad(&e))?,
            "ep_inflation" | "inflation" => self.ep_inflation = value.parse().map_err(|e| bad(&e))?,
            _ => bail!("unknown grid key `{key}` (expected rho2, d, k or inflation)"),
        }
        Ok(())
    }
}
