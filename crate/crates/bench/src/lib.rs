//! Criterion benchmarks for the flowcorr pipeline live under `benches/`.
