//! Harness around the `rscpi` solver: model fixtures, run records, grid
//! sweeps and Markdown reports.

pub mod fixtures;
pub mod grid;
pub mod record;
pub mod report;

pub use fixtures::{load_model, ModelSource};
pub use grid::{run_grid, Ablation, GridOutcome, Job, RunConfigFile};
pub use record::{read_runs, write_runs, RunRecord};
pub use report::render_report;
