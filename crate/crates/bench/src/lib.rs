//! Criterion benchmarks for the carving engine and network layers; see `benches/`.
