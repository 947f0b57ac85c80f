use btf_core::benchgen::{gen_gass_benchmark, gen_gaussian_functional_matrix, gen_poisson_dynsys, GassBenchParams, GASS_BENCH_MEAN};
use btf_core::rng::seeded;
use btf_core::stats::{mean, variance};
use btf_core::{fit, FitConfig, LikelihoodSpec};
use rand::Rng;
use rand_distr::StandardNormal;

fn within_3se(xs: &[f64], target: f64) -> bool {
    (mean(xs) - target).abs() < 3.0 * (variance(xs) / xs.len() as f64).sqrt()
}

#[test]
fn poisson_generator_moments() {
    let (m, t_len, d) = (40_000, 5, 3);
    let inst = gen_poisson_dynsys(1, m, t_len, d, (0, 0), &mut seeded(21)).unwrap();
    for t in 0..t_len {
        let v: Vec<f64> = (0..m).flat_map(|j| (0..d).map(move |k| (j, k))).map(|(j, k)| inst.v[[j, t, k]]).collect();
        assert!(within_3se(&v, 0.2 * (t + 1) as f64), "E[v] at t = {t}: {}", mean(&v));
    }
    // Counts of one tensor share row factors, so draw independent 1×1 instances.
    let mut rng = seeded(23);
    let ys: Vec<Vec<f64>> = (0..100_000)
        .map(|_| gen_poisson_dynsys(1, 1, t_len, d, (0, 0), &mut rng).unwrap().y.iter().copied().collect())
        .collect();
    for t in 0..t_len {
        let y: Vec<f64> = ys.iter().map(|c| c[t]).collect();
        assert!(within_3se(&y, 0.6 * (t + 1) as f64), "E[y] at t = {t}: {}", mean(&y));
    }
    let (mut flat, mut steps) = (0usize, 0usize);
    for j in 0..m {
        for t in 1..t_len {
            steps += 1;
            assert!(inst.v[[j, t, 0]] >= inst.v[[j, t - 1, 0]]);
            if inst.v[[j, t, 0]] == inst.v[[j, t - 1, 0]] {
                flat += 1;
            }
        }
    }
    let p = flat as f64 / steps as f64;
    assert!((p - 0.8).abs() < 3.0 * (0.16 / steps as f64).sqrt(), "plateau fraction {p}");
}

/// Lower-triangular Cholesky factor of a small dense matrix.
fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            l[i][j] = if i == j { (a[i][i] - s).sqrt() } else { (a[i][j] - s) / l[j][j] };
        }
    }
    l
}

#[test]
fn gass_benchmark_curves_follow_the_constrained_prior() {
    let params = GassBenchParams::default();
    let l = cholesky(&params.covariance());
    let n = GASS_BENCH_MEAN.len();
    let mut rng = seeded(22);
    let mut accepted: Vec<Vec<f64>> = Vec::new();
    for _ in 0..1_000_000 {
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x: Vec<f64> = (0..n).map(|i| GASS_BENCH_MEAN[i] + (0..=i).map(|k| l[i][k] * z[k]).sum::<f64>()).collect();
        let ok = x.iter().all(|v| (0.1..=1.0).contains(v)) && x.windows(2).all(|w| w[0] >= w[1]);
        if ok {
            accepted.push(x);
        }
    }
    assert!(accepted.len() > 100, "only {} oracle draws accepted", accepted.len());
    let draws: Vec<Vec<f64>> = (0..1000)
        .map(|_| gen_gass_benchmark(&params, &mut rng).unwrap().theta_true)
        .collect();
    for i in 0..n {
        let oracle: Vec<f64> = accepted.iter().map(|x| x[i]).collect();
        let got: Vec<f64> = draws.iter().map(|x| x[i]).collect();
        let se = (variance(&oracle) / 1000.0 + variance(&oracle) / oracle.len() as f64).sqrt();
        assert!((mean(&got) - mean(&oracle)).abs() < 3.0 * se, "component {i}: {} vs {}", mean(&got), mean(&oracle));
    }
}

#[test]
fn generators_are_deterministic() {
    let p = GassBenchParams::default();
    assert_eq!(gen_gass_benchmark(&p, &mut seeded(1)).unwrap(), gen_gass_benchmark(&p, &mut seeded(1)).unwrap());
    assert_eq!(
        gen_poisson_dynsys(3, 4, 5, 2, (1, 1), &mut seeded(1)).unwrap(),
        gen_poisson_dynsys(3, 4, 5, 2, (1, 1), &mut seeded(1)).unwrap()
    );
    let a = gen_gaussian_functional_matrix(3, 3, 6, 2, 2, 0.1, 0.3, &mut seeded(1)).unwrap();
    let b = gen_gaussian_functional_matrix(3, 3, 6, 2, 2, 0.1, 0.3, &mut seeded(1)).unwrap();
    assert_eq!(a.tensor, b.tensor);
    assert_eq!(a.theta, b.theta);
}

#[test]
fn btf_beats_the_averaging_floor_on_smooth_jump_curves() {
    let (noise_sd, r) = (0.5, 3);
    let floor = noise_sd / (r as f64).sqrt();
    let mut wins = 0;
    for seed in 0..5 {
        let inst = gen_gaussian_functional_matrix(6, 6, 10, 2, r, 0.1, noise_sd, &mut seeded(500 + seed)).unwrap();
        let mut cfg = FitConfig::new(2, LikelihoodSpec::Gaussian { nu2: 1.0 });
        cfg.k = 1;
        cfg.rho2 = 0.1;
        cfg.sweeps = 1000;
        cfg.burn_in = 500;
        cfg.seed = seed;
        let post = fit(&inst.tensor, cfg).unwrap().mean_theta().unwrap();
        let rmse = (post.iter().zip(&inst.theta).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / post.len() as f64).sqrt();
        if rmse < floor {
            wins += 1;
        }
    }
    assert!(wins >= 3, "beat the averaging floor on {wins} of 5 seeds");
}
