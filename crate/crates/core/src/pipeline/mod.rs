//! Staged residual learning: residual chains, horizon history, measurement
//! stacks, the stage runner and its metrics.

pub mod chain;
pub mod experiment;
pub mod history;
pub mod measurement;
pub mod metrics;
pub mod stage;
pub mod warm_start;

pub use chain::{chain_eval, BaseSource, ChainSnapshot, ChainStage, ResidualChain};
pub use experiment::{run_experiment, ExperimentFailure, ExperimentSpec, StageResult};
pub use history::{HistoryBuffer, HistoryRecord, HistorySnapshot};
pub use measurement::{build_measurement, reference_stack, Costs, Rollout};
pub use metrics::{h2_norm, LowPassState, MetricRecord, MetricSummary, UpdateRecord};
pub use stage::{run_stage, ExecutionMode, StageConfig, StageFailure, StageKind, StageOutput};
pub use warm_start::{check_warm_start, WarmStartSample};
