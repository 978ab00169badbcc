use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::world::TubeWorld;
use crate::geom::{Pose, Rotation};

/// Fraction of the local radius the camera may stray from the centerline.
pub const INSIDE_FRACTION: f64 = 0.8;

/// How far a scripted camera wanders around the centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JitterProfile {
    /// Bound on lateral offset as a fraction of the local radius (≤ 0.3).
    pub lateral_fraction: f64,
    /// Bound on the orientation deviation from the tangent frame (≤ 5°).
    pub angle_deg: f64,
    /// Shift of the arclength samples in units of the frame spacing.
    pub phase: f64,
    /// Distance kept from both tube ends (mm).
    pub margin_mm: f64,
    pub fps: f64,
}

impl Default for JitterProfile {
    fn default() -> Self {
        Self::train()
    }
}

impl JitterProfile {
    pub fn train() -> Self {
        JitterProfile { lateral_fraction: 0.1, angle_deg: 2.0, phase: 0.0, margin_mm: 40.0, fps: 30.0 }
    }

    pub fn test() -> Self {
        JitterProfile { lateral_fraction: 0.12, angle_deg: 2.5, phase: 0.5, ..Self::train() }
    }

    pub fn none() -> Self {
        JitterProfile { lateral_fraction: 0.0, angle_deg: 0.0, ..Self::train() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub pose: Pose,
    pub timestamp: f64,
    pub arclength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub fps: f64,
}

/// Smooth bounded signal: three sinusoids with weights summing to one.
struct Wobble([(f64, f64, f64); 3]);

impl Wobble {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Wobble([
            (rng.gen_range(80.0..220.0), rng.gen_range(0.0..std::f64::consts::TAU), 0.5),
            (rng.gen_range(30.0..80.0), rng.gen_range(0.0..std::f64::consts::TAU), 0.3),
            (rng.gen_range(12.0..30.0), rng.gen_range(0.0..std::f64::consts::TAU), 0.2),
        ])
    }

    fn at(&self, s: f64) -> f64 {
        self.0.iter().map(|(l, p, w)| w * (std::f64::consts::TAU * s / l + p).sin()).sum()
    }
}

/// Camera frame: x along the transported normal, z along the tangent.
pub fn tangent_frame(world: &TubeWorld, s: f64) -> Rotation {
    let st = world.station_at(s);
    let m = Matrix3::from_columns(&[st.normal, st.binormal, st.tangent]);
    Rotation::from_matrix(m, 1e-9).expect("station frame is orthonormal")
}

/// Camera on the centerline looking down the tangent.
pub fn pose_on_centerline(world: &TubeWorld, s: f64) -> Pose {
    canonical(Pose::new(tangent_frame(world, s), world.station_at(s).point))
}

/// Snaps the rotation to what its canonical quaternion encodes, so poses
/// survive a round trip through `poses.csv` unchanged.
pub(crate) fn canonical(pose: Pose) -> Pose {
    Pose::new(Rotation::from_quaternion(pose.rotation.to_quaternion()), pose.position)
}

pub fn generate_trajectory(world: &TubeWorld, seed: u64, n_frames: usize, profile: &JitterProfile) -> Trajectory {
    assert!(n_frames >= 2, "a trajectory needs at least two frames");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lateral = [Wobble::draw(&mut rng), Wobble::draw(&mut rng)];
    let angular = [Wobble::draw(&mut rng), Wobble::draw(&mut rng), Wobble::draw(&mut rng)];
    let s0 = profile.margin_mm;
    let s1 = world.length() - profile.margin_mm;
    let spacing = (s1 - s0) / (n_frames - 1) as f64;
    let per_axis = profile.angle_deg.to_radians() / 3f64.sqrt();

    let samples = (0..n_frames)
        .map(|i| {
            let s = (s0 + (i as f64 + profile.phase) * spacing).min(world.length() - 1.0);
            let st = world.station_at(s);
            let bound = profile.lateral_fraction * st.radius;
            let (a, b) = (lateral[0].at(s), lateral[1].at(s));
            let mut offset = (st.normal * a + st.binormal * b) * (bound / 2f64.sqrt());
            if offset.norm() > INSIDE_FRACTION * st.radius {
                offset *= INSIDE_FRACTION * st.radius / offset.norm();
            }
            let jitter = Rotation::exp(&Vector3::new(
                per_axis * angular[0].at(s),
                per_axis * angular[1].at(s),
                per_axis * angular[2].at(s),
            ));
            let rotation = tangent_frame(world, s).compose(&jitter);
            TrajectorySample {
                pose: canonical(Pose::new(rotation, st.point + offset)),
                timestamp: i as f64 / profile.fps,
                arclength: s,
            }
        })
        .collect();
    Trajectory { samples, fps: profile.fps }
}
