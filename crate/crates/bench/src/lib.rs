//! Criterion benchmarks for the `figp` crate live under `benches/`.
