//! Criterion benchmarks for the solver and the node-wise pipeline; see `benches/`.
