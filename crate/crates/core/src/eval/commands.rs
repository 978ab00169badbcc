//! File-producing entry points behind the command-line subcommands. Each
//! writes only deterministic content, so repeated runs with one config give
//! byte-identical outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::PipelineConfig;
use super::experiments::{perturbation_study, zone_sweep};
use super::pipeline::{
    build_maps, classify_all, detect_all, generate_datasets, load_or_generate, localize_all, make_partition,
    train_classifier, write_datasets, PipelineRun, TrainedClassifier,
};
use super::report::ErrorReport;
use super::{EvalError, StageExt};
use crate::classifier::{DescriptorDb, EmbedModel, TrainReport};
use crate::sim::{write_poses_csv, PoseRecord};
use crate::zones::{read_partition, write_partition, ZonePartition};

pub const MODEL_FILE: &str = "model.bin";
pub const DB_FILE: &str = "descriptors.txt";

fn write(out: &Path, name: &str, contents: impl AsRef<[u8]>, stage: &'static str) -> Result<(), EvalError> {
    fs::create_dir_all(out).stage(stage)?;
    fs::write(out.join(name), contents).stage(stage)
}

pub fn generate(cfg: &PipelineConfig, out: &Path) -> Result<(), EvalError> {
    let data = generate_datasets(cfg)?;
    write_datasets(cfg, &data, out)
}

fn loss_csv(report: &TrainReport) -> String {
    let mut s = String::from("epoch,loss\n");
    for (e, l) in report.epoch_losses.iter().enumerate() {
        let _ = writeln!(s, "{e},{l}");
    }
    s
}

pub fn train(cfg: &PipelineConfig, out: &Path) -> Result<(), EvalError> {
    let data = load_or_generate(cfg)?;
    let partition = make_partition(cfg, &data.train, None)?;
    let clf = train_classifier(cfg, &data.train, &partition, &cfg.classifier.train, 0)?;
    write(out, MODEL_FILE, clf.model.to_bytes(), "train")?;
    write(out, DB_FILE, clf.db.to_text(), "train")?;
    write(out, "train_loss.csv", loss_csv(&clf.report), "train")
}

fn warnings_csv(partition: &ZonePartition, warnings: &[crate::zones::MapWarning]) -> String {
    let mut s = String::from("zone_id,map_points,warning\n");
    for z in &partition.zones {
        let w = warnings.iter().find(|w| w.zone_id == z.zone_id).map(|w| w.reason.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{w}", z.zone_id, z.map.len());
    }
    s
}

pub fn build_map(cfg: &PipelineConfig, out: &Path) -> Result<(), EvalError> {
    let data = load_or_generate(cfg)?;
    let partition = make_partition(cfg, &data.train, None)?;
    let (partition, warnings) = build_maps(cfg, &data.train, partition)?;
    write_partition(out, &partition, cfg.maps.delta_r).stage("build-map")?;
    write(out, "map_summary.csv", warnings_csv(&partition, &warnings), "build-map")
}

/// A run assembled from stored artifacts where `paths` points at them, and
/// recomputed stages elsewhere.
pub fn assemble_run(cfg: &PipelineConfig) -> Result<PipelineRun, EvalError> {
    let data = load_or_generate(cfg)?;
    let (partition, warnings) = match &cfg.paths.maps {
        Some(dir) => {
            let (p, _) = read_partition(dir).stage("build-map")?;
            p.validate(data.train.len()).stage("build-map")?;
            (p, Vec::new())
        }
        None => build_maps(cfg, &data.train, make_partition(cfg, &data.train, None)?)?,
    };
    let classifier = match &cfg.paths.model {
        Some(dir) => {
            let model = EmbedModel::from_bytes(&fs::read(dir.join(MODEL_FILE)).stage("train")?).stage("train")?;
            let db = DescriptorDb::from_text(&fs::read_to_string(dir.join(DB_FILE)).stage("train")?).stage("train")?;
            if db.entries.iter().any(|e| e.zone_id >= partition.len()) {
                return Err(EvalError::Stage { stage: "train", message: "descriptor zones exceed the map partition".into() });
            }
            TrainedClassifier { model, db, report: TrainReport { epoch_losses: Vec::new() } }
        }
        None => train_classifier(cfg, &data.train, &partition, &cfg.classifier.train, 0)?,
    };
    let test_features = detect_all(cfg, &data.test.images)?;
    let classified = classify_all(cfg, &classifier, &data.test.images)?;
    let results = localize_all(cfg, &classifier, &partition, &data.test.intrinsics, &test_features, &classified);
    let idx: Vec<usize> = data.test.records.iter().map(|r| r.index).collect();
    let report = ErrorReport::from_results(&idx, &results, &data.test.poses());
    Ok(PipelineRun { data, partition, warnings, classifier, test_features, classified, results, report })
}

/// Estimated test trajectory in `poses.csv` layout. Arclength and section
/// are those of the classified zone's median training frame.
pub fn trajectory_csv(run: &PipelineRun) -> String {
    let records: Vec<PoseRecord> = run
        .results
        .iter()
        .zip(&run.data.test.records)
        .map(|(r, truth)| {
            let median = &run.data.train.records[run.partition.zones[r.zone_id].median_index()];
            PoseRecord::from_pose(truth.index, truth.timestamp, &r.estimate(), median.arclength, &median.section)
        })
        .collect();
    write_poses_csv(&records)
}

pub fn localize(cfg: &PipelineConfig, out: &Path) -> Result<(), EvalError> {
    let run = assemble_run(cfg)?;
    write(out, "results.csv", run.report.results_csv(), "localize")?;
    write(out, "trajectory.csv", trajectory_csv(&run), "localize")
}

pub fn evaluate(cfg: &PipelineConfig, out: &Path) -> Result<(), EvalError> {
    let run = assemble_run(cfg)?;
    write(out, "results.csv", run.report.results_csv(), "evaluate")?;
    write(out, "trajectory.csv", trajectory_csv(&run), "evaluate")?;
    write(out, "summary.csv", run.report.summary_csv(), "evaluate")
}

pub fn sweep(cfg: &PipelineConfig, out: &Path) -> Result<(), EvalError> {
    let data = load_or_generate(cfg)?;
    let result = zone_sweep(cfg, &data, &cfg.sweep.zone_counts, cfg.sweep.repeats)?;
    write(out, "sweep_cells.csv", result.cells_csv(), "sweep")?;
    write(out, "sweep_box.csv", result.box_csv(), "sweep")
}

pub fn perturb(cfg: &PipelineConfig, out: &Path) -> Result<(), EvalError> {
    let run = assemble_run(cfg)?;
    let result = perturbation_study(cfg, &run, &cfg.perturb.e_values);
    write(out, "perturb.csv", result.csv(), "perturb")
}
