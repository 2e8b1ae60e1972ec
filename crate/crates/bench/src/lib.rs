//! Criterion benchmarks for the DDE kernels and the finite-length decoder;
//! run with `cargo bench -p scldgm-bench`.
