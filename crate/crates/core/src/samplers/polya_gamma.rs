//! Pólya–Gamma draws.
//!
//! Integer parts of the shape use the exact alternating-series sampler for
//! `PG(1, c)`; a fractional remainder uses the gamma-series representation
//! truncated at [`SERIES_TERMS`] terms plus the mean of the dropped tail. Shapes
//! above [`NORMAL_CUTOFF`] use a moment-matched normal.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::error::{BtfError, Result};
use crate::stats::log_normal_cdf;

const TRUNC: f64 = 0.64;
pub const SERIES_TERMS: usize = 200;
pub const NORMAL_CUTOFF: f64 = 170.0;

/// Mean of `PG(b, c)`: `b/(2c) tanh(c/2)`.
pub fn pg_mean(b: f64, c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-6 {
        b / 4.0 * (1.0 - c * c / 12.0)
    } else {
        b / (2.0 * c) * (c / 2.0).tanh()
    }
}

/// Variance of `PG(b, c)`.
pub fn pg_variance(b: f64, c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-3 {
        b / 24.0 * (1.0 - c * c / 5.0)
    } else {
        let ch = (c / 2.0).cosh();
        b * (c.sinh() - c) / (4.0 * c.powi(3) * ch * ch)
    }
}

/// A draw from `PG(b, c)` for `b > 0`.
pub fn polya_gamma_sample<R: Rng + ?Sized>(b: f64, c: f64, rng: &mut R) -> Result<f64> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(BtfError::InvalidArgument(format!(
            "Polya-Gamma shape must be positive and finite, got {b}"
        )));
    }
    if !c.is_finite() {
        return Err(BtfError::NonFinite {
            value: c,
            location: "Polya-Gamma tilt".into(),
        });
    }
    if b > NORMAL_CUTOFF {
        let z: f64 = rng.sample(StandardNormal);
        return Ok((pg_mean(b, c) + pg_variance(b, c).sqrt() * z).max(f64::MIN_POSITIVE));
    }
    let whole = b.floor() as usize;
    let frac = b - whole as f64;
    let mut x = 0.0;
    for _ in 0..whole {
        x += devroye_pg1(c, rng);
    }
    if frac > 1e-12 {
        x += series_pg(frac, c, SERIES_TERMS, rng);
    }
    Ok(x)
}

/// Truncated gamma series `(1/2π²) Σ g_k / ((k-½)² + c²/4π²)` with the tail
/// replaced by its expectation.
fn series_pg<R: Rng + ?Sized>(b: f64, c: f64, terms: usize, rng: &mut R) -> f64 {
    let gamma = Gamma::new(b, 1.0).expect("positive shape");
    let c2 = c * c / (4.0 * PI * PI);
    let mut sum = 0.0;
    for k in 1..=terms {
        let h = k as f64 - 0.5;
        sum += gamma.sample(rng) / (h * h + c2);
    }
    let a = c2.sqrt();
    let tail = if a < 1e-12 {
        1.0 / terms as f64
    } else {
        (PI / 2.0 - (terms as f64 / a).atan()) / a
    };
    (sum + b * tail) / (2.0 * PI * PI)
}

fn devroye_pg1<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let z = 0.5 * c.abs();
    let fz = PI * PI / 8.0 + z * z / 2.0;
    let p_exp = mass_texpon(z, fz);
    loop {
        let x = if rng.random::<f64>() < p_exp {
            let e: f64 = rng.sample(Exp1);
            TRUNC + e / fz
        } else {
            rtigauss(z, rng)
        };
        let mut s = piece_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= piece_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += piece_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Coefficients of the alternating series for the `J*(1, 0)` density.
fn piece_coef(n: usize, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        let h = n as f64 + 0.5;
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * h * h / x).exp()
    } else {
        0.0
    }
}

/// Probability of proposing from the exponential tail piece.
fn mass_texpon(z: f64, fz: f64) -> f64 {
    let t = TRUNC;
    let b = (1.0 / t).sqrt() * (t * z - 1.0);
    let a = -(1.0 / t).sqrt() * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + log_normal_cdf(b);
    let xa = x0 + z + log_normal_cdf(a);
    let qdivp = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + qdivp)
}

/// Inverse Gaussian with mean `1/z`, shape 1, truncated to `(0, TRUNC)`.
fn rtigauss<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNC;
    let mu = if z > 0.0 { 1.0 / z } else { f64::INFINITY };
    if mu > t {
        loop {
            let x = loop {
                let e1: f64 = rng.sample(Exp1);
                let e2: f64 = rng.sample(Exp1);
                if e1 * e1 <= 2.0 * e2 / t {
                    let d = 1.0 + e1 * t;
                    break t / (d * d);
                }
            };
            if rng.random::<f64>() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    } else {
        loop {
            let n: f64 = rng.sample(StandardNormal);
            let y = n * n;
            let mut x = mu + 0.5 * mu * mu * y - 0.5 * mu * (4.0 * mu * y + (mu * y).powi(2)).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x < t {
                return x;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, variance};

    fn draws(b: f64, c: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::seeded(seed);
        (0..n).map(|_| polya_gamma_sample(b, c, &mut rng).unwrap()).collect()
    }

    /// Mean from the infinite-sum representation, summed to a million terms.
    fn series_mean(b: f64, c: f64) -> f64 {
        let c2 = c * c / (4.0 * PI * PI);
        let s: f64 = (1..=1_000_000)
            .map(|k| {
                let h = k as f64 - 0.5;
                1.0 / (h * h + c2)
            })
            .sum();
        b * s / (2.0 * PI * PI)
    }

    #[test]
    fn pg_1_0_mean() {
        let xs = draws(1.0, 0.0, 100_000, 41);
        let se = (1.0 / 24.0 / 1e5f64).sqrt();
        assert!((mean(&xs) - 0.25).abs() < 3.0 * se, "{}", mean(&xs));
        assert!(xs.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn pg_2_3_mean() {
        let target = (1.5f64).tanh() / 3.0;
        assert!((series_mean(2.0, 3.0) - target).abs() < 1e-5);
        let xs = draws(2.0, 3.0, 100_000, 42);
        let se = (pg_variance(2.0, 3.0) / 1e5).sqrt();
        assert!((mean(&xs) - target).abs() < 3.0 * se, "{} vs {target}", mean(&xs));
    }

    #[test]
    fn pg_1_0_variance_matches_truncated_series() {
        // Var J = (1/(4π⁴)) Σ 1/(k-½)⁴, truncated at 200 terms
        let oracle: f64 = (1..=200)
            .map(|k| 1.0 / (k as f64 - 0.5).powi(4))
            .sum::<f64>()
            / (4.0 * PI.powi(4));
        let xs = draws(1.0, 0.0, 400_000, 43);
        assert!((variance(&xs) / oracle - 1.0).abs() < 0.01, "{} vs {oracle}", variance(&xs));
        assert!((oracle - 1.0 / 24.0).abs() < 1e-6);
    }

    #[test]
    fn fractional_shape_mean() {
        let xs = draws(2.5, 1.0, 100_000, 44);
        let se = (pg_variance(2.5, 1.0) / 1e5).sqrt();
        assert!((mean(&xs) - pg_mean(2.5, 1.0)).abs() < 3.0 * se);
        assert!((series_mean(2.5, 1.0) - pg_mean(2.5, 1.0)).abs() < 1e-5);
    }

    #[test]
    fn large_shape_uses_normal() {
        let xs = draws(400.0, 2.0, 20_000, 45);
        let se = (pg_variance(400.0, 2.0) / 2e4).sqrt();
        assert!((mean(&xs) - pg_mean(400.0, 2.0)).abs() < 3.0 * se);
    }

    #[test]
    fn mean_decreases_in_tilt() {
        let means: Vec<f64> = [0.0, 1.0, 2.0, 4.0]
            .iter()
            .enumerate()
            .map(|(k, &c)| mean(&draws(1.0, c, 100_000, 50 + k as u64)))
            .collect();
        assert!(means.windows(2).all(|w| w[0] > w[1]), "{means:?}");
    }

    #[test]
    fn nonpositive_shape_rejected() {
        let mut rng = crate::rng::seeded(46);
        assert!(polya_gamma_sample(0.0, 1.0, &mut rng).is_err());
        assert!(polya_gamma_sample(-1.0, 1.0, &mut rng).is_err());
    }
}
