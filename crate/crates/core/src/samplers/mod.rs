//! Stateless MCMC kernels. Every kernel takes an explicit RNG handle.

pub mod ess;
pub mod gass;
pub mod horseshoe;
pub mod mvn;
pub mod pav;
pub mod polya_gamma;

pub use ess::ess_step;
pub use gass::{constraint_intervals, gass_step, AngleIntervals, GassConfig, GassDraw};
pub use horseshoe::{horseshoe_block_update, tau2_conditional, ShrinkageUpdate};
pub use mvn::{mvn_sample_precision, MvnPrior};
pub use pav::pav_monotone_projection;
pub use polya_gamma::polya_gamma_sample;

/// Log-likelihood of a latent vector.
pub trait LogLikelihood {
    fn log_lik(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> LogLikelihood for F {
    fn log_lik(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// The likelihood that is identically zero on the log scale.
#[derive(Debug, Clone, Copy, Default)]
pub struct Flat;

impl LogLikelihood for Flat {
    fn log_lik(&self, _x: &[f64]) -> f64 {
        0.0
    }
}
