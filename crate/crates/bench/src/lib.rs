//! Criterion benchmarks for the hot numerical kernels live in `benches/`.
