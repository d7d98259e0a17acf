//! Experiment harness: configs, grid runs, records, summaries and plot data.

pub mod config;
pub mod plot;
pub mod record;
pub mod run;
pub mod summary;

pub use config::{ExperimentConfig, ExperimentSection, NoveltySection, OUTPUT_ROOT_VAR};
pub use plot::emit_plot_data;
pub use record::{load_records, RunRecord, RunSummary};
pub use run::{run, run_and_write, run_single, sweep, sweep_configs, RunReport, SweepValues};
pub use summary::{summarize, summary_csv, summary_table, SummaryRow};
