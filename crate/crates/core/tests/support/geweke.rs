//! Joint-distribution checks shared by the engine tests and the acceptance
//! run: forward prior draws against successive-conditional simulation.
//!
//! Each successive-conditional replicate starts from an exact joint draw and
//! runs a few sweeps, redrawing the data after every sweep. Every sweep leaves
//! the joint invariant, so the final states are independent prior draws and a
//! two-sample KS test applies directly.

#![allow(dead_code)]

use btf_core::gibbs::{update_sigma2, FitConfig, GammaPrior, Sampler};
use btf_core::likelihood::LikelihoodSpec;
use btf_core::model::LocalScales;
use btf_core::rng::seeded;
use btf_core::samplers::horseshoe::horseshoe_block_update;
use btf_core::samplers::ShrinkageUpdate;
use btf_core::stats::ks_two_sample;
use btf_core::tensor::ObservationTensor;
use ndarray::{Array2, Array3, Array4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, StandardNormal};

pub const RHO2: f64 = 1.0;
pub const PRIOR: GammaPrior = GammaPrior { shape: 3.0, rate: 3.0 };
pub const REPLICATES: usize = 10_000;
const STEPS: usize = 3;

/// KS p-value of each compared statistic.
pub type PValues = Vec<(&'static str, f64)>;

pub fn min_p(ps: &PValues) -> f64 {
    ps.iter().map(|p| p.1).fold(1.0, f64::min)
}

fn inv_gamma(shape: f64, rate: f64, rng: &mut ChaCha8Rng) -> f64 {
    1.0 / Gamma::new(shape, 1.0 / rate).unwrap().sample(rng)
}

fn hs_plus_prior(l: usize, rng: &mut ChaCha8Rng) -> LocalScales {
    let mut s = LocalScales::ones(l);
    for k in 0..l {
        s.eta[k] = inv_gamma(0.5, 1.0, rng);
        s.phi[k] = inv_gamma(0.5, 1.0 / s.eta[k], rng);
        s.c[k] = inv_gamma(0.5, 1.0 / s.phi[k], rng);
        s.tau2[k] = inv_gamma(0.5, 1.0 / s.c[k], rng);
    }
    s
}

struct Draw {
    w: Array2<f64>,
    v: Array3<f64>,
    scales: Vec<LocalScales>,
    sigma2: f64,
    nu2: f64,
}

/// Prior draw with first-difference (k = 0) curves built by cumulative sums.
fn forward(n: usize, m: usize, t_len: usize, d: usize, rng: &mut ChaCha8Rng) -> Draw {
    let sigma2 = inv_gamma(PRIOR.shape, PRIOR.rate, rng);
    let nu2 = inv_gamma(PRIOR.shape, PRIOR.rate, rng);
    let w = Array2::from_shape_fn((n, d), |_| sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal));
    let mut v = Array3::zeros((m, t_len, d));
    let mut scales = Vec::new();
    for j in 0..m {
        let s = hs_plus_prior(t_len, rng);
        for k in 0..d {
            let mut prev = 0.0;
            for t in 0..t_len {
                let z = (RHO2 * s.tau2[t]).sqrt() * rng.sample::<f64, _>(StandardNormal);
                let x = if t == 0 { z } else { prev - z };
                v[[j, t, k]] = x;
                prev = x;
            }
        }
        scales.push(s);
    }
    Draw { w, v, scales, sigma2, nu2 }
}

fn theta(w: &Array2<f64>, v: &Array3<f64>, i: usize, j: usize, t: usize) -> f64 {
    (0..w.ncols()).map(|k| w[[i, k]] * v[[j, t, k]]).sum()
}

fn gaussian_data(w: &Array2<f64>, v: &Array3<f64>, nu2: f64, r: usize, rng: &mut ChaCha8Rng) -> ObservationTensor {
    let (n, m, t_len) = (w.nrows(), v.dim().0, v.dim().1);
    let noise = Normal::new(0.0, nu2.sqrt()).unwrap();
    let y = Array4::from_shape_fn((n, m, t_len, r), |(i, j, t, _)| theta(w, v, i, j, t) + noise.sample(rng));
    ObservationTensor::dense(y).unwrap()
}

fn binomial_data(w: &Array2<f64>, v: &Array3<f64>, trials: &Array3<u64>, rng: &mut ChaCha8Rng) -> ObservationTensor {
    let (n, m, t_len) = (w.nrows(), v.dim().0, v.dim().1);
    let y = Array4::from_shape_fn((n, m, t_len, 1), |(i, j, t, _)| {
        let p = 1.0 / (1.0 + (-theta(w, v, i, j, t)).exp());
        Binomial::new(trials[[i, j, t]], p).unwrap().sample(rng) as f64
    });
    ObservationTensor::dense(y).unwrap()
}

const NAMES: [&str; 8] = ["w00", "w10", "v000", "dv11", "theta012", "log tau2", "log sigma2", "log nu2"];

fn stats(w: &Array2<f64>, v: &Array3<f64>, scales: &[LocalScales], sigma2: f64, nu2: Option<f64>) -> Vec<f64> {
    let mut s = vec![
        w[[0, 0]],
        w[[1, 0]],
        v[[0, 0, 0]],
        v[[1, 1, 0]] - v[[1, 2, 0]],
        theta(w, v, 0, 1, 2),
        scales[0].tau2[1].ln(),
        sigma2.ln(),
    ];
    if let Some(nu2) = nu2 {
        s.push(nu2.ln());
    }
    s
}

fn compare(names: &[&'static str], forward: &[Vec<f64>], chain: &[Vec<f64>]) -> PValues {
    (0..forward[0].len())
        .map(|k| {
            let a: Vec<f64> = forward.iter().map(|s| s[k]).collect();
            let b: Vec<f64> = chain.iter().map(|s| s[k]).collect();
            (names[k], ks_two_sample(&a, &b).1)
        })
        .collect()
}

fn run_replicates(
    mut cfg: FitConfig,
    (n, m, t_len): (usize, usize, usize),
    replicates: usize,
    simulate: impl Fn(&Array2<f64>, &Array3<f64>, f64, &mut ChaCha8Rng) -> ObservationTensor,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let d = cfg.d;
    let gaussian = matches!(cfg.likelihood, LikelihoodSpec::Gaussian { .. });
    cfg.sweeps = replicates * STEPS + 1;
    cfg.burn_in = replicates * STEPS;
    let mut sampler: Option<Sampler> = None;
    let mut out = Vec::with_capacity(replicates);
    for _ in 0..replicates {
        let start = forward(n, m, t_len, d, rng);
        let y = simulate(&start.w, &start.v, start.nu2, rng);
        let s = match sampler.as_mut() {
            Some(s) => {
                s.set_data(&y).unwrap();
                s
            }
            None => sampler.insert(Sampler::new(&y, cfg.clone()).unwrap()),
        };
        {
            let st = s.state_mut();
            st.factors.w = start.w;
            st.factors.v = start.v;
            st.shrinkage.columns = start.scales;
            st.shrinkage.sigma2 = start.sigma2;
            if gaussian {
                st.nu2 = Some(start.nu2);
            }
        }
        for step in 0..STEPS {
            s.sweep().unwrap();
            if step + 1 < STEPS {
                let st = s.state();
                let y = simulate(&st.factors.w, &st.factors.v, st.nu2.unwrap_or(1.0), rng);
                s.set_data(&y).unwrap();
            }
        }
        let st = s.state();
        out.push(stats(&st.factors.w, &st.factors.v, &st.shrinkage.columns, st.shrinkage.sigma2, st.nu2));
    }
    out
}

fn config(d: usize, lik: LikelihoodSpec) -> FitConfig {
    let mut cfg = FitConfig::new(d, lik);
    cfg.k = 0;
    cfg.rho2 = RHO2;
    cfg.sigma_prior = PRIOR;
    cfg.nu_prior = PRIOR;
    cfg
}

/// Conjugate Gaussian path on a 3×3×4 tensor with D = 2 and two replicates.
pub fn gaussian_path(seed: u64) -> PValues {
    let (n, m, t_len, d, r) = (3, 3, 4, 2, 2);
    let mut rng = seeded(seed);
    let fwd: Vec<Vec<f64>> = (0..REPLICATES)
        .map(|_| {
            let f = forward(n, m, t_len, d, &mut rng);
            stats(&f.w, &f.v, &f.scales, f.sigma2, Some(f.nu2))
        })
        .collect();
    let chain = run_replicates(
        config(d, LikelihoodSpec::Gaussian { nu2: 1.0 }),
        (n, m, t_len),
        REPLICATES,
        |w, v, nu2, rng| gaussian_data(w, v, nu2, r, rng),
        &mut rng,
    );
    compare(&NAMES, &fwd, &chain)
}

/// Pólya–Gamma path on a 2×2×3 tensor with D = 1 and 1 to 3 trials per cell.
pub fn binomial_path(seed: u64) -> PValues {
    let (n, m, t_len, d) = (2, 2, 3, 1);
    let trials = Array3::from_shape_fn((n, m, t_len), |(i, j, t)| 1 + ((i + j + t) % 3) as u64);
    let mut rng = seeded(seed);
    let fwd: Vec<Vec<f64>> = (0..REPLICATES)
        .map(|_| {
            let f = forward(n, m, t_len, d, &mut rng);
            stats(&f.w, &f.v, &f.scales, f.sigma2, None)
        })
        .collect();
    let tr = trials.clone();
    let chain = run_replicates(
        config(d, LikelihoodSpec::Binomial { trials }),
        (n, m, t_len),
        REPLICATES,
        move |w, v, _, rng| binomial_data(w, v, &tr, rng),
        &mut rng,
    );
    compare(&NAMES, &fwd, &chain)
}

/// Horseshoe+ block alone: difference rows `b_ℓ ~ N(0, ρ² τ²_ℓ I_D)` are
/// redrawn between block updates of all four local scales.
pub fn horseshoe_block(seed: u64) -> PValues {
    const HS_NAMES: [&str; 4] = ["log tau2", "log c", "log phi", "log eta"];
    let (l, d, rho2) = (2usize, 3usize, 0.5);
    let mut rng = seeded(seed);
    let summary = |s: &LocalScales| vec![s.tau2[1].ln(), s.c[1].ln(), s.phi[1].ln(), s.eta[1].ln()];
    let fwd: Vec<Vec<f64>> = (0..REPLICATES).map(|_| summary(&hs_plus_prior(l, &mut rng))).collect();
    let chain: Vec<Vec<f64>> = (0..REPLICATES)
        .map(|_| {
            let mut s = hs_plus_prior(l, &mut rng);
            for _ in 0..STEPS {
                let norms: Vec<f64> = (0..l)
                    .map(|k| {
                        (0..d)
                            .map(|_| rho2 * s.tau2[k] * rng.sample::<f64, _>(StandardNormal).powi(2))
                            .sum()
                    })
                    .collect();
                horseshoe_block_update(&norms, rho2, d, &mut s, ShrinkageUpdate::Standard, &mut rng).unwrap();
            }
            summary(&s)
        })
        .collect();
    compare(&HS_NAMES, &fwd, &chain)
}

/// Row-variance update alone, as a long successive-conditional chain.
pub fn sigma2_submodel(seed: u64) -> PValues {
    let mut rng = seeded(seed);
    let (n, d) = (4, 2);
    let fwd: Vec<f64> = (0..REPLICATES).map(|_| inv_gamma(PRIOR.shape, PRIOR.rate, &mut rng).ln()).collect();
    let mut s2 = inv_gamma(PRIOR.shape, PRIOR.rate, &mut rng);
    let mut chain = Vec::with_capacity(REPLICATES);
    for _ in 0..REPLICATES {
        let w = Array2::from_shape_fn((n, d), |_| s2.sqrt() * rng.sample::<f64, _>(StandardNormal));
        s2 = update_sigma2(&w, &PRIOR, &mut rng).unwrap();
        chain.push(s2.ln());
    }
    vec![("log sigma2", ks_two_sample(&fwd, &chain).1)]
}
