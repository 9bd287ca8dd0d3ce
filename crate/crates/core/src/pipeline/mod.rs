//! Run configuration, the end-to-end pipeline, the synthetic fixture and
//! report rendering.

mod config;
mod fixture;
mod report;
mod run;

pub use config::{
    apply_override, validate_config, ConfigIssue, EmbedderSpecs, PathsConfig, PipelineConfig, PrototypeConfig,
    DATA_DIR_ENV,
};
pub use fixture::{generate_fixture, FixtureSpec, FIXTURE_CLASSES};
pub use report::{render_confusion, render_report, render_summary_table, render_sweep};
pub use run::{
    build_prototypes, load_ground_truth, pooled_confusion, run_pipeline, sha256_hex, shuffle_prototype_labels,
    write_ground_truth, ArtifactWriter, Engine, RunManifest, RunReport, RunResult, RunSummary, CONFUSION_FILE,
    MANIFEST_FILE, REPORT_FILE,
};
