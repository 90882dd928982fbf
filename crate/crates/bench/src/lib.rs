//! Criterion benchmarks for `filter-forge`; run with `cargo bench -p filter-forge-bench`.
