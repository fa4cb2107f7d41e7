//! Experiment orchestration: manifests, feature caches, training and the
//! augmentation-factor ablation.

pub mod ablate;
pub mod config;
pub mod data;
pub mod manifest;
pub mod synth;
pub mod train;

pub use config::{ExperimentConfig, SEED_ENV};
pub use data::{extract_features, resolve_samples, segment_id, split_segment_id, AudioFeature, CacheSet, ExtractSummary};
pub use manifest::{parse_manifest, write_manifest, ManifestRecord, Split};
pub use train::{evaluate, run_experiment, train_epoch, train_model, Evaluation, RunResult, SeedRun, SubjectPrediction, TrainLog};
pub use ablate::{
    ablation_csv, curve_points, emit_curve, parse_curve, read_results_dir, run_ablation, Cell, CellResult, CurvePoint, GridSpec,
    CURVE_HEADER, TABLE_CELLS,
};
pub use synth::{write_synthetic_cohort, CohortFiles, CohortSpec};
