//! Criterion benchmarks for the core kernels live in `benches/kernels.rs`;
//! run them with `cargo bench -p hfe-bench`.
