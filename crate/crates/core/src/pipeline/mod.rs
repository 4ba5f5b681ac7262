//! Experiment plumbing: configuration, patch extraction, the end-to-end
//! run and cross-run reports.

pub mod config;
pub mod extract;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, ImageSource};
pub use extract::{box_downscale, extract_patches, save_patches, ExtractedPatch, PatchExtractSpec};
pub use report::{emit_report, report_csv, report_svg, ReportOutcome, REPORT_HEADER};
pub use run::{new_run_dir, run_experiment, run_in_dir, summarize, EpochScores, FinalScores, RunOutcome, Summary};
