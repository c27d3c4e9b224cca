//! Criterion benchmarks for scene placement and end-to-end replay; see `benches/`.
