//! Generalized analytic slice sampling for linearly constrained Gaussian priors.
//!
//! Each step draws a slice level and an ellipse through the current point,
//! intersects the angle sets on which every constraint `d·x' ≥ γ` holds, and
//! picks uniformly among the grid angles in that intersection whose point clears
//! the slice. The grid is uniform on the circle and contains angle 0, so the
//! reverse move is on the grid as well.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LogLikelihood, MvnPrior};
use crate::constraints::ConstraintSet;
use crate::error::{BtfError, Result};
use crate::linalg::dot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GassConfig {
    pub grid_size: usize,
    pub include_current: bool,
}

impl Default for GassConfig {
    fn default() -> Self {
        Self {
            grid_size: 512,
            include_current: true,
        }
    }
}

impl GassConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 16 {
            return Err(BtfError::InvalidArgument(format!(
                "GASS grid size {} below minimum 16",
                self.grid_size
            )));
        }
        Ok(())
    }

    /// Angle of grid point `g`: `-π + 2πg/G`.
    #[inline]
    pub fn angle(&self, g: usize) -> f64 {
        -PI + 2.0 * PI * g as f64 / self.grid_size as f64
    }
}

/// Sorted, disjoint closed sub-intervals of `[-π, π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleIntervals(Vec<(f64, f64)>);

impl AngleIntervals {
    pub fn full() -> Self {
        Self(vec![(-PI, PI)])
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.0
    }

    pub fn measure(&self) -> f64 {
        self.0.iter().map(|(a, b)| b - a).sum()
    }

    pub fn contains(&self, theta: f64) -> bool {
        self.0.iter().any(|&(a, b)| a <= theta && theta <= b)
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            let (a0, a1) = self.0[i];
            let (b0, b1) = other.0[j];
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if lo <= hi {
                out.push((lo, hi));
            }
            if a1 < b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self(out)
    }
}

/// The set `{θ ∈ [-π, π] : a cos θ + b sin θ ≥ c}`.
///
/// Writing the left side as `R cos(θ - φ)` with `R = √(a² + b²)`: the set is
/// everything when `c ≤ -R`, empty when `c > R`, and otherwise the arc
/// `|θ - φ| ≤ arccos(c / R)`, split in two when it wraps past `±π`.
pub fn constraint_intervals(a: f64, b: f64, c: f64) -> AngleIntervals {
    let r = a.hypot(b);
    if r == 0.0 {
        return if c <= 0.0 {
            AngleIntervals::full()
        } else {
            AngleIntervals::empty()
        };
    }
    if c <= -r {
        return AngleIntervals::full();
    }
    if c > r {
        return AngleIntervals::empty();
    }
    let phi = b.atan2(a);
    let half = (c / r).clamp(-1.0, 1.0).acos();
    let (lo, hi) = (phi - half, phi + half);
    if lo < -PI {
        AngleIntervals(vec![(-PI, hi), (lo + 2.0 * PI, PI)])
    } else if hi > PI {
        AngleIntervals(vec![(-PI, hi - 2.0 * PI), (lo, PI)])
    } else {
        AngleIntervals(vec![(lo, hi)])
    }
}

/// Intersection of the angle sets of every `(a, b, c)` triple.
pub fn intersect_triples<I>(triples: I) -> AngleIntervals
where
    I: IntoIterator<Item = (f64, f64, f64)>,
{
    let mut set = AngleIntervals::full();
    for (a, b, c) in triples {
        set = set.intersect(&constraint_intervals(a, b, c));
        if set.is_empty() {
            break;
        }
    }
    set
}

/// Grid angles lying inside `set`.
pub fn grid_candidates(set: &AngleIntervals, cfg: &GassConfig) -> Vec<f64> {
    let g_len = cfg.grid_size;
    let scale = g_len as f64 / (2.0 * PI);
    let mut out = Vec::new();
    for &(lo, hi) in set.intervals() {
        let first = ((lo + PI) * scale).ceil().max(0.0) as usize;
        let last = (((hi + PI) * scale).floor() as usize).min(g_len - 1);
        for g in first..=last {
            let theta = cfg.angle(g);
            if theta >= lo && theta <= hi {
                out.push(theta);
            }
        }
    }
    out.dedup();
    out
}

/// Picks uniformly among feasible grid angles for which `accept` succeeds.
///
/// Candidates are visited in a uniformly random order and the first accepted
/// one is returned, which has the same distribution as drawing uniformly from
/// the accepted subset. Returns `None` when nothing qualifies.
pub fn select_on_grid<T, R, I, F>(triples: I, cfg: &GassConfig, rng: &mut R, mut accept: F) -> Option<T>
where
    R: Rng + ?Sized,
    I: IntoIterator<Item = (f64, f64, f64)>,
    F: FnMut(f64) -> Option<T>,
{
    let set = intersect_triples(triples);
    let mut candidates = grid_candidates(&set, cfg);
    if cfg.include_current && !candidates.contains(&0.0) {
        candidates.push(0.0);
    }
    while !candidates.is_empty() {
        let k = rng.random_range(0..candidates.len());
        let theta = candidates.swap_remove(k);
        if let Some(found) = accept(theta) {
            return Some(found);
        }
    }
    None
}

/// Result of one GASS transition.
#[derive(Debug, Clone, PartialEq)]
pub struct GassDraw {
    pub x: Vec<f64>,
    pub angle: f64,
    /// No candidate qualified and the input was returned unchanged.
    pub degenerate: bool,
}

/// Point on the ellipse through `x` with centred direction `v` around `mean`.
#[inline]
pub fn ellipse_point(x: &[f64], v: &[f64], mean: &[f64], theta: f64) -> Vec<f64> {
    let (s, c) = theta.sin_cos();
    x.iter()
        .zip(v)
        .zip(mean)
        .map(|((xi, vi), mi)| (xi - mi) * c + vi * s + mi)
        .collect()
}

/// One GASS transition targeting `exp(loglik(x)) MVN(x; μ, Σ) 1[D x ≥ γ]`.
pub fn gass_step<R, L>(
    x: &[f64],
    prior: &MvnPrior,
    loglik: &L,
    cons: &ConstraintSet,
    cfg: &GassConfig,
    rng: &mut R,
) -> Result<GassDraw>
where
    R: Rng + ?Sized,
    L: LogLikelihood + ?Sized,
{
    cfg.validate()?;
    if x.len() != prior.dim() {
        return Err(BtfError::ShapeMismatch(format!(
            "point of length {} for prior of dimension {}",
            x.len(),
            prior.dim()
        )));
    }
    cons.check(x)?;
    let current = loglik.log_lik(x);
    if !current.is_finite() {
        return Err(BtfError::InvalidArgument(format!(
            "log-likelihood {current} at the current point"
        )));
    }
    let threshold = current + rng.random::<f64>().ln();
    let v = prior.sample_centered(rng);
    let mu = prior.mean();
    let centred: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
    let triples: Vec<(f64, f64, f64)> = cons
        .iter()
        .map(|(d, g)| (dot(d, &centred), dot(d, &v), g - dot(d, mu)))
        .collect();

    let picked = select_on_grid(triples, cfg, rng, |theta| {
        if theta == 0.0 {
            return Some((x.to_vec(), 0.0));
        }
        let cand = ellipse_point(x, &v, mu, theta);
        (cons.is_satisfied(&cand) && loglik.log_lik(&cand) >= threshold).then_some((cand, theta))
    });
    Ok(match picked {
        Some((x_new, angle)) => {
            debug_assert!(cons.is_satisfied(&x_new));
            GassDraw {
                x: x_new,
                angle,
                degenerate: false,
            }
        }
        None => GassDraw {
            x: x.to_vec(),
            angle: 0.0,
            degenerate: true,
        },
    })
}
