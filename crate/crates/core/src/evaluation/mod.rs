//! Test-set scoring, grouped error tables and report files.

mod groups;
mod metrics;
mod report;

pub use groups::{
    group_report, group_report_by_name, read_group_csv, write_group_csv, GroupReport, GroupRow, Grouping, SpeedBins,
    DEFAULT_SPEED_BINS,
};
pub use metrics::{evaluate, evaluate_clips, EpisodeError, Evaluation};
pub use report::{
    comparison_table, emit_report, read_errors_csv, report_file_name, write_errors_csv, Summary, ERRORS_FILE,
    SUMMARY_FILE,
};
