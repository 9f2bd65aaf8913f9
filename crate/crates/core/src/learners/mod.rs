//! Tabular multi-agent learners: LTQL (two variants), IQL, DistQ and HystQ.

pub mod buffer;
pub mod exploration;
pub mod tables;
pub mod train;
pub mod update;

pub use buffer::ReplayBuffer;
pub use exploration::{select_actions, Exploration, LinearSchedule};
pub use tables::QTables;
pub use train::{
    evaluate_greedy, evaluate_policy, oscillates_in_last_half, train, EvalRow, EvalSummary, RunRecord, TrainConfig,
};
pub use update::{Algorithm, LearnerConfig, LearnerState};
