//! Orchestration and evaluation: the end-to-end run, pose error metrics,
//! the zone-count sweep and the forced-misclassification study.

pub mod commands;
mod config;
mod experiments;
mod pipeline;
mod report;

use std::fmt::Display;

use thiserror::Error;

pub use config::{
    ClassifierConfig, MapsConfig, PathsConfig, PerturbConfig, PipelineConfig, SimConfig, SweepConfig, ZoneMode,
    ZonesConfig,
};
pub use experiments::{perturbation_study, zone_sweep, PerturbationResult, SweepCell, SweepResult};
pub use pipeline::{
    build_maps, classify_all, detect_all, generate_datasets, intrinsics, load_or_generate, localize_all, make_partition,
    perturbed_zone, preprocess_all, run_on, run_pipeline, train_classifier, write_datasets, Datasets, PipelineRun,
    TrainedClassifier,
};
pub use report::{pose_errors, summarize, ErrorReport, Group, ImageRow, Summary};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: &'static str, message: String },
}

impl EvalError {
    pub fn stage(&self) -> &'static str {
        match self {
            EvalError::Config(_) => "config",
            EvalError::Stage { stage, .. } => stage,
        }
    }
}

/// Tags any error with the pipeline stage it came from.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, EvalError>;
}

impl<T, E: Display> StageExt<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, EvalError> {
        self.map_err(|e| EvalError::Stage { stage, message: e.to_string() })
    }
}
