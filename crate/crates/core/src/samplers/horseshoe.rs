//! Horseshoe+ local-scale updates through nested inverse-gamma augmentation.
//!
//! Prior per difference row: `η ~ IG(½, 1)`, `φ | η ~ IG(½, 1/η)`,
//! `c | φ ~ IG(½, 1/φ)`, `τ² | c ~ IG(½, 1/c)`, where `φ` is stored as a
//! squared scale. Each of the `D` factor coordinates of the row's difference
//! is `N(0, ρ²τ²)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{BtfError, Result};
use crate::model::LocalScales;

const SCALE_FLOOR: f64 = 1e-250;
const SCALE_CEIL: f64 = 1e250;

/// Which conditional is used for the local variance `τ²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShrinkageUpdate {
    /// `IG((D+1)/2, ‖(ΔV)_ℓ‖²/(2ρ²) + 1/c_ℓ)` per row.
    #[default]
    Standard,
    /// `IG(D+1, ‖ΔV‖²_F/2 + 1/c_ℓ)` using the whole difference matrix.
    TotalNorm,
}

/// Draw from `IG(shape, rate)`.
pub fn inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0)
        .expect("positive shape")
        .sample(rng);
    (rate / g).clamp(SCALE_FLOOR, SCALE_CEIL)
}

/// `(shape, rate)` of the `τ²` conditional under the standard update.
pub fn tau2_conditional(row_norm_sq: f64, rho2: f64, d: usize, c: f64) -> (f64, f64) {
    ((d as f64 + 1.0) / 2.0, row_norm_sq / (2.0 * rho2) + 1.0 / c)
}

/// Redraws `τ², c, φ, η` for every difference row of one column.
pub fn horseshoe_block_update<R: Rng + ?Sized>(
    row_norms_sq: &[f64],
    rho2: f64,
    d: usize,
    scales: &mut LocalScales,
    variant: ShrinkageUpdate,
    rng: &mut R,
) -> Result<()> {
    if row_norms_sq.len() != scales.len() {
        return Err(BtfError::ShapeMismatch(format!(
            "{} row norms for {} local scales",
            row_norms_sq.len(),
            scales.len()
        )));
    }
    if !(rho2 > 0.0) || d == 0 {
        return Err(BtfError::InvalidArgument(format!(
            "shrinkage update needs rho2 > 0 and D ≥ 1, got {rho2} and {d}"
        )));
    }
    if let Some(bad) = row_norms_sq.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(BtfError::InvalidArgument(format!("row norm {bad}")));
    }
    if !scales.all_positive() {
        return Err(BtfError::InvalidArgument("local scales must be positive".into()));
    }
    let total: f64 = row_norms_sq.iter().sum();
    for l in 0..scales.len() {
        let (shape, rate) = match variant {
            ShrinkageUpdate::Standard => tau2_conditional(row_norms_sq[l], rho2, d, scales.c[l]),
            ShrinkageUpdate::TotalNorm => (d as f64 + 1.0, total / 2.0 + 1.0 / scales.c[l]),
        };
        scales.tau2[l] = inv_gamma(shape, rate, rng);
        scales.c[l] = inv_gamma(1.0, 1.0 / scales.tau2[l] + 1.0 / scales.phi[l], rng);
        scales.phi[l] = inv_gamma(1.0, 1.0 / scales.c[l] + 1.0 / scales.eta[l], rng);
        scales.eta[l] = inv_gamma(1.0, 1.0 / scales.phi[l] + 1.0, rng);
    }
    Ok(())
}

/// Forward draw of `l` rows of local scales from the horseshoe+ prior.
pub fn sample_prior<R: Rng + ?Sized>(l: usize, rng: &mut R) -> LocalScales {
    let mut s = LocalScales::ones(l);
    for k in 0..l {
        s.eta[k] = inv_gamma(0.5, 1.0, rng);
        s.phi[k] = inv_gamma(0.5, 1.0 / s.eta[k], rng);
        s.c[k] = inv_gamma(0.5, 1.0 / s.phi[k], rng);
        s.tau2[k] = inv_gamma(0.5, 1.0 / s.c[k], rng);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_two_sample;
    use rand_distr::StandardNormal;

    #[test]
    fn conditional_arithmetic() {
        assert_eq!(tau2_conditional(2.0, 1.0, 3, 1.0), (2.0, 2.0));
    }

    #[test]
    fn degenerate_input_stays_positive() {
        let mut rng = crate::rng::seeded(61);
        let mut s = LocalScales::ones(1);
        s.c[0] = 1e300;
        for _ in 0..1000 {
            horseshoe_block_update(&[0.0], 1.0, 2, &mut s, ShrinkageUpdate::Standard, &mut rng).unwrap();
            assert!(s.all_positive());
            assert!(s.tau2[0].is_finite() && s.c[0].is_finite());
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        let mut rng = crate::rng::seeded(62);
        let mut s = LocalScales::ones(2);
        let upd = ShrinkageUpdate::Standard;
        assert!(horseshoe_block_update(&[1.0], 1.0, 2, &mut s, upd, &mut rng).is_err());
        assert!(horseshoe_block_update(&[1.0, -1.0], 1.0, 2, &mut s, upd, &mut rng).is_err());
        assert!(horseshoe_block_update(&[1.0, 1.0], 0.0, 2, &mut s, upd, &mut rng).is_err());
        s.c[1] = 0.0;
        assert!(horseshoe_block_update(&[1.0, 1.0], 1.0, 2, &mut s, upd, &mut rng).is_err());
    }

    /// Successive-conditional chain: data redrawn given τ², then the block update.
    fn geweke_chain(variant: ShrinkageUpdate, rounds: usize, thin: usize, seed: u64) -> Vec<f64> {
        let (d, rho2) = (3usize, 0.5);
        let mut rng = crate::rng::seeded(seed);
        let mut s = sample_prior(1, &mut rng);
        let mut out = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            for _ in 0..thin {
                let norm: f64 = (0..d)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        rho2 * s.tau2[0] * z * z
                    })
                    .sum();
                horseshoe_block_update(&[norm], rho2, d, &mut s, variant, &mut rng).unwrap();
            }
            out.push(s.tau2[0].ln());
        }
        out
    }

    #[test]
    fn geweke_tau_marginal() {
        let chain = geweke_chain(ShrinkageUpdate::Standard, 10_000, 10, 63);
        let mut rng = crate::rng::seeded(64);
        let forward: Vec<f64> = (0..10_000).map(|_| sample_prior(1, &mut rng).tau2[0].ln()).collect();
        let (_, p) = ks_two_sample(&chain, &forward);
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn total_norm_update_drifts_from_prior() {
        let chain = geweke_chain(ShrinkageUpdate::TotalNorm, 10_000, 10, 65);
        let mut rng = crate::rng::seeded(66);
        let forward: Vec<f64> = (0..10_000).map(|_| sample_prior(1, &mut rng).tau2[0].ln()).collect();
        let (_, p) = ks_two_sample(&chain, &forward);
        assert!(p < 0.01, "KS p = {p}");
    }
}
