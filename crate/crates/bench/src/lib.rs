//! Criterion benchmarks for `batchlab-core`. Run with `cargo bench -p batchlab-bench`.
