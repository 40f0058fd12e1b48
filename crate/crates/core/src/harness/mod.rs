//! Synthetic workloads, submit/remove traces and their replay.

mod metrics;
mod replay;
mod trace;
mod workload;

use thiserror::Error;

pub use metrics::{metrics_csv, pair, task_savings, MetricsSample, ReuseHistogram, StepMetrics};
pub use replay::{replay, Mode, OracleStats, RawStreams, ReplayConfig, ReplayError, ReplayFailure, ReplayResult};
pub use trace::{generate_trace, Action, Op, Trace, TraceKind, TraceSpec};
pub use workload::{generate_workload, TaskRange, Workload, WorkloadSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid specification: {0}")]
pub struct SpecError(pub String);
