//! Experiment configuration, multi-seed orchestration and result files.

mod commands;
mod config;
mod run;

pub use commands::{
    beta_check, bounds_table, dp_solve, dp_verify, load_mdp, render_bounds, BetaCheck, BoundRow, BoundsQuery,
    DpSolution, QStarEntry, VerifyReport, POLICY_LIMIT,
};
pub use config::{EnvSpec, ExperimentConfig, MatrixPreset, MatrixSpec};
pub use run::{
    aggregate_csv, evaluate_tables, read_tables, rows_csv, run_experiment, run_stem, write_outputs, AGGREGATE_HEADER,
    CSV_HEADER,
};
