//! Study configuration, execution and result files.

pub mod config;
pub mod emit;
pub mod float_text;
pub mod scene;
pub mod stats;
pub mod study;

pub use config::{Format, MethodSpec, NoiseConfig, OutputConfig, StudyConfig, TargetSelection};
pub use emit::{emit, read_json, write_json, write_rows_csv, write_summary_csv};
pub use stats::{box_stats, quantile, BoxStats};
pub use study::{run_study, run_study_with, StudyMetadata, StudyPlan, StudyResult, StudyRow, SummaryBlock};
