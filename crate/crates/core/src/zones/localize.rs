use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Zone, ZoneError, ZonePartition};
use crate::classifier::{classify, DescriptorDb, EmbedModel};
use crate::features::{detect_and_describe, match_to_map, DetectorParams, FrameFeatures};
use crate::geom::{project, refine_pose, CameraIntrinsics, Correspondence, Pose, SolverConfig, MIN_POSE_MATCHES};
use crate::image::Raster;

/// Outlier handling for registering a query frame against a zone map.
/// Descriptor matches between frames far apart along the tube are often
/// wrong, so the pose is refined on a consensus set rather than on all
/// matches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustConfig {
    /// Refinements from random minimal-ish subsets (the first uses all matches).
    pub hypotheses: usize,
    pub sample_size: usize,
    /// Re-projection error below which a match counts as an inlier (px).
    pub inlier_px: f64,
    /// Fewer inliers than this and the refined pose is rejected.
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RobustConfig {
    fn default() -> Self {
        RobustConfig { hypotheses: 40, sample_size: 6, inlier_px: 3.0, min_inliers: 6, seed: 1 }
    }
}

/// Validity filter applied after refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Largest allowed move away from the initial pose (mm). Unset means
    /// twice the classified zone's diameter.
    pub max_jump: Option<f64>,
    /// Largest allowed final RMS re-projection error (px).
    pub max_rms: f64,
    /// When false every query stops after classification.
    pub refine: bool,
    pub robust: RobustConfig,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { max_jump: None, max_rms: 10.0, refine: true, robust: RobustConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Status {
    Refined,
    ClassificationOnly,
    Rejected,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Refined => "refined",
            Status::ClassificationOnly => "classification-only",
            Status::Rejected => "rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    pub zone_id: usize,
    pub initial_pose: Pose,
    /// Present exactly when `status` is `Refined`.
    pub refined_pose: Option<Pose>,
    pub final_rms: Option<f64>,
    pub status: Status,
    pub matches: usize,
    pub inliers: usize,
}

impl LocalizationResult {
    /// Refined pose if accepted, otherwise the zone's median pose.
    pub fn estimate(&self) -> Pose {
        self.refined_pose.unwrap_or(self.initial_pose)
    }
}

/// Everything a query needs, borrowed from the trained pipeline.
#[derive(Debug, Clone, Copy)]
pub struct Localizer<'a> {
    pub model: &'a EmbedModel,
    pub db: &'a DescriptorDb,
    pub partition: &'a ZonePartition,
    pub intrinsics: &'a CameraIntrinsics,
    pub detector: &'a DetectorParams,
    pub solver: &'a SolverConfig,
    pub thresholds: &'a Thresholds,
}

/// Classify, initialise at the zone's median pose, then refine against the
/// zone map and filter.
pub fn localize(image: &Raster, image_index: usize, ctx: &Localizer) -> Result<LocalizationResult, ZoneError> {
    let (zone_id, _) = classify(ctx.model, ctx.db, image)?;
    let features = detect_and_describe(image, ctx.detector, image_index)?;
    Ok(localize_in_zone(&features, &ctx.partition.zones[zone_id], ctx))
}

/// Refinement stage for an already chosen zone.
pub fn localize_in_zone(features: &FrameFeatures, zone: &Zone, ctx: &Localizer) -> LocalizationResult {
    let mut result = LocalizationResult {
        zone_id: zone.zone_id,
        initial_pose: zone.median_pose,
        refined_pose: None,
        final_rms: None,
        status: Status::ClassificationOnly,
        matches: 0,
        inliers: 0,
    };
    if !ctx.thresholds.refine || zone.map.is_empty() {
        return result;
    }
    let corr: Vec<Correspondence> = match_to_map(features, &zone.map, ctx.detector.ratio)
        .into_iter()
        .map(|(p, o)| (p.position, o.pixel))
        .collect();
    result.matches = corr.len();
    if corr.len() < MIN_POSE_MATCHES {
        return result;
    }
    result.status = Status::Rejected;
    let robust = &ctx.thresholds.robust;
    let Some((pose, inliers)) = consensus_pose(&zone.median_pose, &corr, ctx.intrinsics, ctx.solver, robust) else {
        return result;
    };
    result.inliers = inliers.len();
    if inliers.len() < robust.min_inliers.max(MIN_POSE_MATCHES) {
        return result;
    }
    let Ok(out) = refine_pose(&pose, &inliers, ctx.intrinsics, ctx.solver) else {
        return result;
    };
    result.final_rms = Some(out.rms);
    let max_jump = ctx.thresholds.max_jump.unwrap_or(2.0 * zone.diameter);
    let jump = (out.pose.position - zone.median_pose.position).norm();
    if out.rms.is_finite() && out.rms <= ctx.thresholds.max_rms && jump <= max_jump {
        result.refined_pose = Some(out.pose);
        result.status = Status::Refined;
    }
    result
}

fn inlier_set(pose: &Pose, corr: &[Correspondence], k: &CameraIntrinsics, px: f64) -> (Vec<Correspondence>, f64) {
    let mut cost = 0.0;
    let set = corr
        .iter()
        .filter(|(v, o)| match project(pose, k, v) {
            Some(u) if (u - o).norm() < px => {
                cost += (u - o).norm_squared();
                true
            }
            _ => false,
        })
        .copied()
        .collect();
    (set, cost)
}

/// Best-supported pose over refinements from the initial pose on random
/// subsets, polished on its inliers until the set stops changing.
fn consensus_pose(
    initial: &Pose,
    corr: &[Correspondence],
    k: &CameraIntrinsics,
    solver: &SolverConfig,
    robust: &RobustConfig,
) -> Option<(Pose, Vec<Correspondence>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(robust.seed);
    let size = robust.sample_size.clamp(MIN_POSE_MATCHES, corr.len());
    let mut best: Option<(Pose, Vec<Correspondence>, f64)> = None;
    for h in 0..robust.hypotheses.max(1) {
        let subset: Vec<Correspondence> = if h == 0 {
            corr.to_vec()
        } else {
            index::sample(&mut rng, corr.len(), size).into_iter().map(|i| corr[i]).collect()
        };
        let Ok(out) = refine_pose(initial, &subset, k, solver) else { continue };
        let (set, cost) = inlier_set(&out.pose, corr, k, robust.inlier_px);
        let better = match &best {
            None => true,
            Some((_, b, c)) => set.len() > b.len() || (set.len() == b.len() && cost < *c),
        };
        if better {
            let done = set.len() == corr.len();
            best = Some((out.pose, set, cost));
            if done {
                break;
            }
        }
    }
    let (mut pose, mut set, _) = best?;
    for _ in 0..3 {
        if set.len() < MIN_POSE_MATCHES {
            break;
        }
        let Ok(out) = refine_pose(&pose, &set, k, solver) else { break };
        let (next, _) = inlier_set(&out.pose, corr, k, robust.inlier_px);
        pose = out.pose;
        if next == set {
            break;
        }
        set = next;
    }
    Some((pose, set))
}
