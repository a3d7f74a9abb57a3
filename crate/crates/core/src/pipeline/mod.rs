//! Batch commands and their file formats.
//!
//! Each `cmd_*` function is what the corresponding CLI verb runs; the
//! `render_*` helpers produce the plain-text tables it prints.

mod commands;
mod files;
mod render;

pub use commands::{
    cmd_corr, cmd_importance, cmd_loo, cmd_metrics, cmd_synth, cmd_train, correlations,
    load_records, train_and_evaluate, with_jobs, BaseSource, CorrRow, DetectorSpec,
    FeatureSelection, LooOptions, LooTable, MetricsOptions, SynthOptions, SynthSummary,
    Threshold, TrainOptions, TrainOutcome,
};
pub use files::{
    detector_name, read_manifest, read_matrix, write_manifest, write_matrix, ManifestRow,
    MetricMatrixRow, LABEL_PREFIX,
};
pub use render::{render_corr, render_importance, render_loo, render_report};
