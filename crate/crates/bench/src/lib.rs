//! Criterion benchmarks for the samplers and Gibbs sweeps; see `benches/`.
