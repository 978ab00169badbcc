//! Pinhole ray casting against the tube, approximated by one cylinder per
//! centerline segment.

use nalgebra::{Vector2, Vector3};

use super::world::TubeWorld;
use super::SimError;
use crate::geom::{CameraIntrinsics, Pose};
use crate::image::Raster;

/// Headlight falloff distance (mm): irradiance halves at this range.
const FALLOFF_MM: f64 = 45.0;
const GAIN: f64 = 1.15;
const MAX_STEPS: usize = 4000;
const MAX_JUMP: isize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub point: Vector3<f64>,
    pub arclength: f64,
    /// Unit surface normal pointing into the lumen.
    pub normal: Vector3<f64>,
    /// Distance along the ray (mm).
    pub distance: f64,
}

/// Ray direction in world coordinates through pixel `(u, v)`.
pub fn pixel_ray(pose: &Pose, intrinsics: &CameraIntrinsics, pixel: &Vector2<f64>) -> Vector3<f64> {
    let d = Vector3::new((pixel.x - intrinsics.cx) / intrinsics.fx, (pixel.y - intrinsics.cy) / intrinsics.fy, 1.0);
    (pose.rotation.matrix() * d).normalize()
}

impl TubeWorld {
    fn segment(&self, k: usize) -> (Vector3<f64>, Vector3<f64>, f64, f64) {
        let a = &self.stations[k];
        let b = &self.stations[k + 1];
        let d = b.point - a.point;
        let len = d.norm();
        (a.point, d / len, len, 0.5 * (a.radius + b.radius))
    }

    /// Segment whose cylinder contains `p`, if the point is inside the tube.
    pub fn containing_segment(&self, p: &Vector3<f64>) -> Option<usize> {
        let k = self.nearest_station(p).min(self.stations.len() - 2);
        let (origin, axis, _, radius) = self.segment(k);
        let w = p - origin;
        let radial = w - axis * w.dot(&axis);
        (radial.norm() < radius).then_some(k)
    }

    /// First wall intersection of the ray `origin + t·dir`, starting the
    /// march at segment `start`.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, start: usize) -> Option<Hit> {
        let last = self.stations.len() - 2;
        let mut k = start;
        let mut prev_move = 0isize;
        let mut unit_only = false;
        for _ in 0..MAX_STEPS {
            let (p0, axis, len, radius) = self.segment(k);
            let w = origin - p0;
            let d_ax = dir.dot(&axis);
            let d_perp = dir - axis * d_ax;
            let w_perp = w - axis * w.dot(&axis);
            let a = d_perp.norm_squared();
            let b = 2.0 * w_perp.dot(&d_perp);
            let c = w_perp.norm_squared() - radius * radius;
            let disc = b * b - 4.0 * a * c;
            let mut step: isize = if a > 1e-18 && disc >= 0.0 {
                let t = (-b + disc.sqrt()) / (2.0 * a);
                let along = (w + dir * t).dot(&axis);
                let inside = (0.0..=len).contains(&along);
                // A reversal right after a unit move means the ray fell into the
                // wedge between two neighbouring cylinders; accept the hit here.
                let reversed = prev_move.abs() == 1 && (along > len) != (prev_move > 0);
                if t > 0.0 && (inside || reversed) {
                    let point = origin + dir * t;
                    let radial = (point - p0) - axis * (point - p0).dot(&axis);
                    return Some(Hit {
                        point,
                        arclength: self.stations[k].arclength + along.clamp(0.0, len),
                        normal: -radial.normalize(),
                        distance: t,
                    });
                }
                // Jump close to where this cylinder says the hit lies.
                let skip = if along > len { (along - len) / len } else { -along / len };
                let n = (skip.floor() as isize + 1).clamp(1, MAX_JUMP);
                if along > len {
                    n
                } else {
                    -n
                }
            } else if d_ax >= 0.0 {
                1
            } else {
                -1
            };
            if prev_move != 0 && step.signum() != prev_move.signum() {
                unit_only = true;
            }
            if unit_only {
                step = step.signum();
            }
            let next = (k as isize + step).clamp(0, last as isize) as usize;
            if next == k {
                return None;
            }
            prev_move = next as isize - k as isize;
            k = next;
        }
        None
    }

    /// Wall point seen through `pixel`.
    pub fn raycast_pixel(&self, pose: &Pose, intrinsics: &CameraIntrinsics, pixel: &Vector2<f64>) -> Result<Option<Hit>, SimError> {
        let start = self.containing_segment(&pose.position).ok_or(SimError::PoseOutsideTube)?;
        Ok(self.cast(&pose.position, &pixel_ray(pose, intrinsics, pixel), start))
    }

    /// Headlight-lit Lambertian rendering with 2×2 supersampling.
    pub fn render(&self, pose: &Pose, intrinsics: &CameraIntrinsics) -> Result<Raster, SimError> {
        let start = self.containing_segment(&pose.position).ok_or(SimError::PoseOutsideTube)?;
        let offsets = [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)];
        Ok(Raster::from_fn(intrinsics.width, intrinsics.height, |x, y| {
            let mut acc = 0.0;
            for (ox, oy) in offsets {
                let dir = pixel_ray(pose, intrinsics, &Vector2::new(x as f64 + ox, y as f64 + oy));
                if let Some(hit) = self.cast(&pose.position, &dir, start) {
                    acc += self.shade(&hit, &dir);
                }
            }
            acc / offsets.len() as f64
        }))
    }

    fn shade(&self, hit: &Hit, dir: &Vector3<f64>) -> f64 {
        let lambert = hit.normal.dot(&(-dir)).max(0.0);
        let falloff = 1.0 / (1.0 + (hit.distance / FALLOFF_MM).powi(2));
        (GAIN * self.albedo(&hit.point, hit.arclength) * lambert * falloff).clamp(0.0, 1.0)
    }
}
