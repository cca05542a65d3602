//! Criterion benchmarks for the recognition pipeline; see `benches/`.
