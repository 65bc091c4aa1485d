//! Experiment configuration, seeded runs, aggregation, comparison and plots.
//!
//! A run directory holds one subdirectory per setting and one `seed-N`
//! directory per run inside it, each with `steps.csv`, `updates.csv` and
//! `timing.csv` (and `failure.txt` if the run ended early). Everything the
//! aggregation and comparison steps report is recomputed from those files.

mod config;
mod plot;
mod run;
mod stats;

pub use config::{apply_override, load_config, parse_pairs, AgentKind, ExperimentConfig, Scale, Setting};
pub use plot::{emit_bars, emit_plot, render_bars, render_curves, BarChart};
pub use run::{load_runs, run_experiment, run_one, write_run, RunSummary};
pub use stats::{
    aggregate, compare_settings, final_return, read_curve_csv, write_curve_csv, welch_p_value, ComparisonReport,
    CurveRow, CurveTable, Order, Relation, SettingStats,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("aggregation error: {0}")]
    Aggregate(String),
    #[error("run failed: {0}")]
    Run(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Process exit code: 1 for configuration errors, 2 for anything that
    /// went wrong while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests;
