//! Weighted score aggregation, uncertainty propagation to scores, accuracy
//! and coverage reports, and the end-to-end validation workflow.

mod benchmark;
mod diagnostics;
mod eval;
mod model;
mod workflow;

pub use benchmark::{holdout_benchmark, holdout_rmse, SingleMethod};
pub use diagnostics::{
    save_histograms, save_width_bins, value_histograms, width_by_missing_rate, HistogramBin, WidthBin,
};
pub use eval::{
    comparison_table, evaluate, score_distribution, EvaluationReport, Metrics, ReportRow, ScoreDistribution,
    ScoreSummary,
};
pub use model::{compute_scores, Level, ScoreUnit, Scores, ScoringModel, PILLARS};
pub use workflow::{run_workflow, WorkflowConfig, WorkflowOutput};
