//! Criterion benchmarks for `crossdisp-core`; see `benches/`.
