//! The end-to-end pipeline as a chain of stages, each usable on its own.

use std::collections::BTreeMap;
use std::path::Path;

use super::config::{PipelineConfig, ZoneMode};
use super::report::ErrorReport;
use super::{EvalError, StageExt};
use crate::classifier::{preprocess, train, DescriptorDb, EmbedModel, TrainConfig, TrainReport};
use crate::features::{detect_and_describe, FrameFeatures};
use crate::geom::{CameraIntrinsics, Pose};
use crate::image::Raster;
use crate::par;
use crate::sim::{
    expert_labels, generate_trajectory, generate_world, read_dataset, render_dataset, write_dataset, write_labels,
    Dataset,
};
use crate::zones::{
    build_all_maps, localize_in_zone, partition_from_labels, partition_uniform, LocalizationResult, Localizer,
    MapWarning, ZonePartition,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn intrinsics(cfg: &PipelineConfig) -> Result<CameraIntrinsics, EvalError> {
    CameraIntrinsics::from_fov(cfg.sim.image_size, cfg.sim.fov_deg).stage("generate")
}

/// Renders the training and test trajectories from the configured seeds.
pub fn generate_datasets(cfg: &PipelineConfig) -> Result<Datasets, EvalError> {
    let k = intrinsics(cfg)?;
    let world = generate_world(cfg.sim.world_seed, &cfg.world).stage("generate")?;
    let render = |seed, n, profile| {
        let traj = generate_trajectory(&world, seed, n, profile);
        render_dataset(&world, &traj, &k, cfg.execution()).stage("generate")
    };
    Ok(Datasets {
        train: render(cfg.sim.train_seed, cfg.sim.train_frames, &cfg.sim.train_profile)?,
        test: render(cfg.sim.test_seed, cfg.sim.test_frames, &cfg.sim.test_profile)?,
    })
}

pub fn write_datasets(cfg: &PipelineConfig, data: &Datasets, dir: &Path) -> Result<(), EvalError> {
    for (name, ds, seed) in [("train", &data.train, cfg.sim.train_seed), ("test", &data.test, cfg.sim.test_seed)] {
        let extra = BTreeMap::from([("trajectory_seed".to_string(), seed.to_string())]);
        write_dataset(ds, &dir.join(name), cfg.sim.expert_zones, &extra).stage("generate")?;
    }
    Ok(())
}

/// Datasets from `paths.data` when set, otherwise freshly rendered.
pub fn load_or_generate(cfg: &PipelineConfig) -> Result<Datasets, EvalError> {
    match &cfg.paths.data {
        Some(dir) => Ok(Datasets {
            train: read_dataset(&dir.join("train")).stage("generate")?,
            test: read_dataset(&dir.join("test")).stage("generate")?,
        }),
        None => generate_datasets(cfg),
    }
}

/// Zone partition of the training set: uniform with `n_zones` (or the
/// configured count), or the simulator's expert labels.
pub fn make_partition(cfg: &PipelineConfig, train: &Dataset, n_zones: Option<usize>) -> Result<ZonePartition, EvalError> {
    let poses = train.poses();
    match (cfg.zones.mode, n_zones) {
        (ZoneMode::Expert, None) => {
            let labels = expert_labels(&train.records, cfg.sim.expert_zones).stage("partition")?;
            partition_from_labels(&poses, &write_labels(&labels)).stage("partition")
        }
        (_, n) => partition_uniform(&poses, n.unwrap_or(cfg.zones.count)).stage("partition"),
    }
}

/// Trained embedding model and the database of training embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub model: EmbedModel,
    pub db: DescriptorDb,
    pub report: TrainReport,
}

pub fn preprocess_all(cfg: &PipelineConfig, images: &[Raster], input_size: usize) -> Vec<Raster> {
    par::map(cfg.execution(), images, |img| preprocess(img, input_size))
}

/// Trains the classifier on the partition's zones. `repeat` shifts both the
/// initialisation and the pair-sampling seeds.
pub fn train_classifier(
    cfg: &PipelineConfig,
    train_set: &Dataset,
    partition: &ZonePartition,
    train_cfg: &TrainConfig,
    repeat: u64,
) -> Result<TrainedClassifier, EvalError> {
    let arch = cfg.classifier.arch.clone();
    let inputs = preprocess_all(cfg, &train_set.images, arch.input_size);
    let model = EmbedModel::new(arch, cfg.classifier.init_seed.wrapping_add(repeat)).stage("train")?;
    let tc = TrainConfig { seed: train_cfg.seed.wrapping_add(repeat), ..*train_cfg };
    let (model, report) = train(model, &inputs, &partition.member_ranges(), &tc).stage("train")?;
    let db = DescriptorDb::build(&model, &inputs, &partition.zone_of_images()).stage("train")?;
    Ok(TrainedClassifier { model, db, report })
}

pub fn build_maps(
    cfg: &PipelineConfig,
    train_set: &Dataset,
    partition: ZonePartition,
) -> Result<(ZonePartition, Vec<MapWarning>), EvalError> {
    build_all_maps(partition, &train_set.images, &train_set.poses(), &train_set.intrinsics, &cfg.map_params(), cfg.execution())
        .stage("build-map")
}

pub fn detect_all(cfg: &PipelineConfig, images: &[Raster]) -> Result<Vec<FrameFeatures>, EvalError> {
    par::map_indexed(cfg.execution(), images.len(), |i| detect_and_describe(&images[i], &cfg.detector, i))
        .into_iter()
        .collect::<Result<_, _>>()
        .stage("localize")
}

/// Nearest-zone label of every image.
pub fn classify_all(cfg: &PipelineConfig, classifier: &TrainedClassifier, images: &[Raster]) -> Result<Vec<usize>, EvalError> {
    let inputs = preprocess_all(cfg, images, classifier.model.config().input_size);
    par::map(cfg.execution(), &inputs, |x| Ok(classifier.db.nearest(&classifier.model.embed(x)?)?.0))
        .into_iter()
        .collect::<Result<_, crate::classifier::ClassifierError>>()
        .stage("localize")
}

/// Zone index after the forced shift of the perturbation study: `+e` for
/// even image indices, `−e` for odd ones, clamped to the valid range.
pub fn perturbed_zone(zone: usize, image_index: usize, e: usize, n_zones: usize) -> usize {
    if image_index % 2 == 0 {
        (zone + e).min(n_zones - 1)
    } else {
        zone.saturating_sub(e)
    }
}

/// Refines every query in its given zone.
pub fn localize_all(
    cfg: &PipelineConfig,
    classifier: &TrainedClassifier,
    partition: &ZonePartition,
    intrinsics: &CameraIntrinsics,
    features: &[FrameFeatures],
    zones: &[usize],
) -> Vec<LocalizationResult> {
    let ctx = Localizer {
        model: &classifier.model,
        db: &classifier.db,
        partition,
        intrinsics,
        detector: &cfg.detector,
        solver: &cfg.solver,
        thresholds: &cfg.localize,
    };
    par::map_indexed(cfg.execution(), features.len(), |i| localize_in_zone(&features[i], &partition.zones[zones[i]], &ctx))
}

/// All intermediate products of one end-to-end run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub data: Datasets,
    pub partition: ZonePartition,
    pub warnings: Vec<MapWarning>,
    pub classifier: TrainedClassifier,
    pub test_features: Vec<FrameFeatures>,
    /// Classified zone of every test image.
    pub classified: Vec<usize>,
    pub results: Vec<LocalizationResult>,
    pub report: ErrorReport,
}

impl PipelineRun {
    pub fn truths(&self) -> Vec<Pose> {
        self.data.test.poses()
    }

    /// Re-localizes with every classification shifted by `e`.
    pub fn perturbed(&self, cfg: &PipelineConfig, e: usize) -> ErrorReport {
        let n = self.partition.len();
        let zones: Vec<usize> =
            self.classified.iter().enumerate().map(|(i, &z)| perturbed_zone(z, i, e, n)).collect();
        let results = localize_all(cfg, &self.classifier, &self.partition, &self.data.test.intrinsics, &self.test_features, &zones);
        let idx: Vec<usize> = (0..results.len()).collect();
        ErrorReport::from_results(&idx, &results, &self.truths())
    }
}

/// Generate (or load) → partition → train → build maps → localize → report.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun, EvalError> {
    let data = load_or_generate(cfg)?;
    run_on(cfg, data)
}

pub fn run_on(cfg: &PipelineConfig, data: Datasets) -> Result<PipelineRun, EvalError> {
    let partition = make_partition(cfg, &data.train, None)?;
    let classifier = train_classifier(cfg, &data.train, &partition, &cfg.classifier.train, 0)?;
    let (partition, warnings) = build_maps(cfg, &data.train, partition)?;
    let test_features = detect_all(cfg, &data.test.images)?;
    let classified = classify_all(cfg, &classifier, &data.test.images)?;
    let results = localize_all(cfg, &classifier, &partition, &data.test.intrinsics, &test_features, &classified);
    let idx: Vec<usize> = data.test.records.iter().map(|r| r.index).collect();
    let report = ErrorReport::from_results(&idx, &results, &data.test.poses());
    Ok(PipelineRun { data, partition, warnings, classifier, test_features, classified, results, report })
}
