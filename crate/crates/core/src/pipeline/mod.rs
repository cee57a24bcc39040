//! Dataset ingestion, run orchestration and the run-directory artifacts.

mod analyze;
mod annotate;
mod backends;
mod config;
mod dataset;
mod record;
mod run;

pub use analyze::{analyze, AnalyzeOutcome, HumanRho, ANALYSIS, CORRELATIONS, CORRELATIONS_TEXT};
pub use annotate::{annotate, candidate_pairs, select_pairs, AnnotateOptions, AnnotateSummary, PairKey};
pub use backends::Backends;
pub use config::{DatasetSection, NerSource, OracleSection, OutputSection, RoleSection, RunConfig};
pub use dataset::{load_dataset, Dataset, DatasetError, DatasetItem, Diagnostic};
pub use record::{compute_metrics, reference_answers, Branch, BranchRecord, MetricSettings, RunRecord, Status};
pub use run::{
    check_run, compare_records, ensure_run_dir, metric_settings, read_records, read_summary, records_bytes,
    render_comparisons, render_summary, report_text, run, run_with_backends, summarize, to_json_bytes, BranchComparison, BranchSummary,
    CheckOutcome, ExclusionTotals, MetricMean, RunOptions, RunOutcome, Summary, CACHE, COMPARE, COMPARE_TEXT,
    RECORDS, SUMMARY, SUMMARY_TEXT, TIMING,
};
