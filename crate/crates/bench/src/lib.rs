//! Criterion benchmarks for the sparse V-OFDM crate; see `benches/`.
