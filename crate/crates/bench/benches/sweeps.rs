use btf_core::benchgen::{gen_gaussian_functional_matrix, gen_poisson_dynsys};
use btf_core::rng::seeded;
use btf_core::{ConstraintKind, FitConfig, LikelihoodSpec, PoissonLik, Sampler};
use criterion::{criterion_group, criterion_main, Criterion};

fn gaussian_sweep(c: &mut Criterion) {
    let mut rng = seeded(4);
    let inst = gen_gaussian_functional_matrix(10, 8, 20, 3, 3, 0.05, 0.3, &mut rng).unwrap();
    let mut cfg = FitConfig::new(3, LikelihoodSpec::Gaussian { nu2: 0.1 });
    cfg.k = 1;
    cfg.sweeps = usize::MAX;
    cfg.burn_in = usize::MAX - 1;
    let mut sampler = Sampler::new(&inst.tensor, cfg).unwrap();
    c.bench_function("sweep/gaussian_10x8x20", |b| b.iter(|| sampler.sweep().unwrap()));
}

fn black_box_sweep(c: &mut Criterion) {
    let mut rng = seeded(5);
    let inst = gen_poisson_dynsys(11, 12, 20, 3, (3, 3), &mut rng).unwrap();
    let y = inst.observed().unwrap();
    let mut cfg = FitConfig::new(3, LikelihoodSpec::black_box(PoissonLik, ConstraintKind::positive()));
    cfg.sweeps = usize::MAX;
    cfg.burn_in = usize::MAX - 1;
    let mut sampler = Sampler::new(&y, cfg).unwrap();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(20);
    group.bench_function("poisson_11x12x20", |b| b.iter(|| sampler.sweep().unwrap()));
    group.finish();
}

criterion_group!(benches, gaussian_sweep, black_box_sweep);
criterion_main!(benches);
