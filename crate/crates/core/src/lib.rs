//! Bayesian tensor filtering: constrained, smooth Bayesian factorization of
//! functional tensors with trend-filtering priors on the column curves.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod benchgen;
pub mod constraints;
pub mod dose;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod samplers;
pub mod stats;
pub mod tensor;
pub mod trend;

pub use error::{BtfError, Result};
pub use constraints::{ConstraintKind, ConstraintScope, ConstraintSet, Monotone};
pub use dose::{GammaMixture, GammaMixtureLik, PlateExperiment};
pub use gibbs::{fit, FitConfig, GammaPrior, Sampler};
pub use likelihood::{CellLikelihood, LikelihoodSpec, PoissonLik};
pub use model::{FactorState, PosteriorSamples, ShrinkageState};
pub use samplers::{GassConfig, ShrinkageUpdate};
pub use tensor::{LongRecord, ObservationTensor};
pub use trend::CompositeDiffMatrix;
