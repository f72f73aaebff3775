//! Criterion benchmarks for ftl-core; see `benches/kernels.rs`.
