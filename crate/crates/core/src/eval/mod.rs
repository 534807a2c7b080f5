//! Answer scoring, threshold sweeps and frontier reports.

mod metrics;
mod sweep;

pub use metrics::{exact_match, f1, normalize_answer};
pub use sweep::{
    baseline_rows, emit_report, parse_csv_report, prefix_length_ablation, sweep, MetricRow,
    REPORT_COLUMNS,
};
