//! Optimization: SGD with clipping, schedules, restarts and evaluation.

pub mod eval;
pub mod lm;
pub mod qa;
pub mod report;
pub mod schedule;
pub mod sgd;

pub use eval::{evaluate_lm, evaluate_qa, lm_episode, qa_episode, LmMetrics, QaMetrics};
pub use lm::{train_lm, train_lm_epoch};
pub use qa::{train_qa, train_qa_epoch, EpochStats};
pub use report::{MetricRow, RunSummary, TrainReport};
pub use schedule::{ClipPolicy, LmSchedule, QaSchedule};
pub use sgd::sgd_step;
