//! Masking, metrics and the repeated-mask benchmark.

mod benchmark;
mod mask;
pub mod metrics;
mod report;

pub use benchmark::{repetition_seed, run_benchmark, BenchmarkConfig, MaskMode};
pub use mask::{generate_mask, mask_size, MissingMask, MAX_RATE};
pub use metrics::{mae, r2, r2_robust, rmse};
pub use report::{
    directional_check, mean_std, CalibrationReport, DirectionalCheck, EvalReport, FailureRecord, Metric,
    MetricSummary, MetricValue, OrderingCheck, PooledRow, ReportMetadata, ReportRow, RepetitionRecord, SampleRecord,
};
