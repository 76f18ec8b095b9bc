//! Scoring, early stopping and benchmarks.

mod baselines;
mod bench;
mod confusion;
mod early_stop;

pub use baselines::{
    shallow_baselines, BaselineConfig, BaselineRow, BaselineSplit, BaselineTable, NearestCentroid, CENTROID_BASELINE,
    MLP_BASELINE,
};
pub use bench::{benchmark_speedup, SpeedupEntry, SpeedupJob, SpeedupReport};
pub(crate) use confusion::predict_chunked;
pub use confusion::{error_rate, evaluate, normalize, ConfusionMatrix, Evaluation, NormalizedConfusion};
pub use early_stop::{early_stop_update, EarlyStopMonitor, StopDecision, IMPROVEMENT_TOLERANCE};
