//! Experiment pipelines, reports and the command-line front end.
//!
//! The train study fits PCA, GS-PCA, aGS-PCA and eGS-PCA against one
//! gradient and scores the train set; the test study projects a synthetic
//! ground truth onto each basis under both gradient approximations and
//! simulates the projections.

mod cli;
mod config;
mod descent;
mod pipeline;
mod report;

pub use cli::cli_main;
pub use config::{
    Algorithm, DescentSettings, ExperimentConfig, GradientKind, DEFAULT_CONFIG, TEST_SEED_MASK,
};
pub use descent::{
    subspace_descent, subspace_descent_traced, Descent, Scaled, DESCENT_FD_STEP, MAX_INCREASES,
};
pub use pipeline::{
    prepare, run_test_experiment, run_train_experiment, test_experiment, test_rows,
    train_experiment, train_rows, train_scores, GradientBases, Prepared, Projection,
};
pub use report::{merge_report_json, ScoreReport, TestRow, TrainRow};
