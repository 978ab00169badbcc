use std::collections::HashMap;

use super::camera::{project, CameraIntrinsics, MapPoint, Observation2D};
use super::gn::SolverConfig;
use super::lie::Pose;
use super::triangulate::triangulate_point_with;
use super::GeomError;
use crate::features::{match_tracks, FrameFeatures, Track};
use crate::par::{self, Execution};

pub const MIN_ZONE_FRAMES: usize = 3;

/// Triangulates a landmark map for one zone from `frames` taken at the
/// known `poses`. Points whose worst re-projection error exceeds `delta_r`
/// are discarded. Output order follows track order.
pub fn build_zone_map(
    zone_id: usize,
    frames: &[FrameFeatures],
    poses: &[Pose],
    intrinsics: &CameraIntrinsics,
    delta_r: f64,
    ratio: f64,
) -> Result<Vec<MapPoint>, GeomError> {
    build_zone_map_with(zone_id, frames, poses, intrinsics, delta_r, ratio, &SolverConfig::default(), Execution::default())
}

#[allow(clippy::too_many_arguments)]
pub fn build_zone_map_with(
    zone_id: usize,
    frames: &[FrameFeatures],
    poses: &[Pose],
    intrinsics: &CameraIntrinsics,
    delta_r: f64,
    ratio: f64,
    solver: &SolverConfig,
    exec: Execution,
) -> Result<Vec<MapPoint>, GeomError> {
    if frames.len() != poses.len() {
        return Err(GeomError::LengthMismatch);
    }
    if frames.len() < MIN_ZONE_FRAMES {
        return Err(GeomError::TooFewFrames(frames.len()));
    }
    let tracks = match_tracks(frames, ratio);
    let by_image: HashMap<usize, usize> = frames.iter().enumerate().map(|(i, f)| (f.image_index, i)).collect();

    // Poses are fixed, so the joint least-squares problem over all points
    // separates into one independent problem per track.
    let points = par::map(exec, &tracks, |track| {
        point_from_track(zone_id, track, frames, poses, &by_image, intrinsics, delta_r, solver)
    });
    let map: Vec<MapPoint> = points.into_iter().flatten().collect();
    if map.is_empty() {
        return Err(GeomError::EmptyMap);
    }
    Ok(map)
}

#[allow(clippy::too_many_arguments)]
fn point_from_track(
    zone_id: usize,
    track: &Track,
    frames: &[FrameFeatures],
    poses: &[Pose],
    by_image: &HashMap<usize, usize>,
    intrinsics: &CameraIntrinsics,
    delta_r: f64,
    solver: &SolverConfig,
) -> Option<MapPoint> {
    let observations: Vec<(Observation2D, Pose)> = track
        .observations
        .iter()
        .map(|&(image, kp)| {
            let f = by_image[&image];
            (Observation2D { pixel: frames[f].keypoints[kp].pixel, image_index: image }, poses[f])
        })
        .collect();
    let position = triangulate_point_with(&observations, intrinsics, solver).ok()?;
    let mut max_err: f64 = 0.0;
    for (obs, pose) in &observations {
        let u = project(pose, intrinsics, &position)?;
        max_err = max_err.max((u - obs.pixel).norm());
    }
    (max_err <= delta_r).then(|| MapPoint {
        position,
        descriptor: track.descriptor.clone(),
        zone_id,
        max_reproj_error: max_err,
    })
}
