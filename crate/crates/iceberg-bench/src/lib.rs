//! Benchmark and validation harness for the iceberg hash table: workload
//! runners (microbenchmark, YCSB-style mixes, fill sweep, level census),
//! a structured report with latency percentiles, and CSV/JSON emitters.

pub mod report;
pub mod workload;

pub use report::{emit_report, percentiles, BenchReport, Percentiles, ReportFormat};
pub use workload::{
    run_dist, run_micro, run_space_sweep, run_ycsb, Backend, WorkloadError, WorkloadKind,
    WorkloadSpec,
};
