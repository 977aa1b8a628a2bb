//! Criterion benchmarks for taskcut live under `benches/`.
