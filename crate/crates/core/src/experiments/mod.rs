//! The experiment studies: configuration, grid execution and result files.

pub mod config;
pub mod features;
pub mod runner;

pub use config::{Arm, Cell, ExperimentConfig, ExperimentKind, SYNTHETIC};
pub use features::{load_feature_cache, save_feature_cache, FeatureSet, FeatureStore, ImageSamples};
pub use runner::{
    build_id, extractor_params, run_experiment, run_noise, run_single, run_table1, run_table3, run_table4,
    write_results_csv, CellOutcome, Context, ResultRecord,
};
