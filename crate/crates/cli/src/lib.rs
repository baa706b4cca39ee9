//! Library surface of the benchmark harness; the `nnsdr` binary is a thin
//! clap wrapper around these pieces.

pub mod config;
pub mod run;

pub use config::{BenchmarkConfig, Method, MethodOverrides};
pub use run::{run_benchmark, run_scaling, ResultRow, ScalingRow, SdrFit, SummaryRow};
