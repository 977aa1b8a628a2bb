//! Task-subset selection for agent benchmarks.
//!
//! Given a historical agents × tasks performance matrix, pick a small task
//! subset, predict full-benchmark scores from it with ridge regression, and
//! check under nested cross-validation that agent rankings survive.

pub mod cost;
pub mod defaults;
pub mod matrix;
pub mod metrics;
pub mod protocols;
pub mod ridge;
pub mod rng;
pub mod selection;
pub mod sensitivity;
pub mod synthetic;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use cost::{estimate_savings, Cents, CostModel, Savings};
pub use matrix::{
    full_scores, pass_rates, AgentRecord, MatrixError, PerformanceMatrix, ScoreVector, TaskRecord,
};
pub use metrics::{Metric, MetricTriple};
pub use protocols::{run_protocol, Protocol, ProtocolError, ProtocolParams, ProtocolResult};
pub use ridge::{fit_ridge, RidgeFit};
pub use selection::{
    DifficultyBand, MidrangeRule, Selection, SelectionError, SelectionResult, Strategy,
};
pub use sensitivity::{band_sweep, BandSweepRow};
pub use synthetic::{IrtConfig, ShiftConfig};
