//! Procedural tube world standing in for an endoscopy phantom: seeded
//! geometry and texture, scripted camera paths, ray-cast frames, and the
//! dataset files the rest of the pipeline consumes.

mod dataset;
mod render;
mod trajectory;
mod world;

use std::io;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use dataset::{
    expert_labels, read_dataset, read_manifest, read_poses_csv, render_dataset, write_dataset, write_labels,
    write_poses_csv, Dataset, LabelRange, PoseRecord, POSES_HEADER,
};
pub use render::{pixel_ray, Hit};
pub use trajectory::{
    generate_trajectory, pose_on_centerline, tangent_frame, JitterProfile, Trajectory, TrajectorySample, INSIDE_FRACTION,
};
pub use world::{value_noise, SectionStyle, Station, TubeWorld, WorldConfig, SECTIONS};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid world configuration: {0}")]
    InvalidConfig(String),
    #[error("camera pose lies outside the tube")]
    PoseOutsideTube,
    #[error("malformed dataset file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl PartialEq for SimError {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (SimError::InvalidConfig(a), SimError::InvalidConfig(b)) => a == b,
            (SimError::PoseOutsideTube, SimError::PoseOutsideTube) => true,
            (SimError::Format(a), SimError::Format(b)) => a == b,
            (SimError::Io(a), SimError::Io(b)) => a.kind() == b.kind(),
            _ => false,
        }
    }
}

pub fn generate_world(seed: u64, config: &WorldConfig) -> Result<TubeWorld, SimError> {
    TubeWorld::generate(seed, config)
}

/// Seeded surface points on the tube wall, in world coordinates, with their
/// arclengths. Points lie exactly on the ray-casting cylinders.
pub fn surface_points(world: &TubeWorld, seed: u64, count: usize, s_range: (f64, f64)) -> Vec<(Vector3<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = world.stations.len() - 2;
    (0..count)
        .map(|_| {
            let s = rng.gen_range(s_range.0..s_range.1);
            let k = ((s / world.config.segment_mm).floor() as usize).min(last);
            let a = &world.stations[k];
            let b = &world.stations[k + 1];
            let d = b.point - a.point;
            let len = d.norm();
            let axis = d / len;
            let radius = 0.5 * (a.radius + b.radius);
            let u = (a.normal - axis * axis.dot(&a.normal)).normalize();
            let v = axis.cross(&u);
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let along = rng.gen_range(0.0..len);
            let p = a.point + axis * along + (u * theta.cos() + v * theta.sin()) * radius;
            (p, a.arclength + along)
        })
        .collect()
}
