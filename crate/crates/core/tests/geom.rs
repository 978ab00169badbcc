mod common;

use std::time::Instant;

use approx::assert_relative_eq;
use common::*;
use nalgebra::{Vector2, Vector3};
use rand::Rng;
use tubeloc::features::{Descriptor, FrameFeatures, Keypoint, DESCRIPTOR_LEN};
use tubeloc::geom::*;

#[test]
fn exp_log_roundtrip_over_a_thousand_twists() {
    let worst = lie_roundtrip_error(1000, 11);
    assert!(worst < 1e-9, "{worst:e}");
}

#[test]
fn ten_thousand_compositions_stay_on_the_group() {
    let t = Instant::now();
    let drift = composition_drift(10_000, 12);
    assert!(drift < 1e-9, "{drift:e}");
    assert!(t.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn quaternions_agree_with_rotation_matrices() {
    let mut r = rng(3);
    for _ in 0..200 {
        let rot = Rotation::exp(&random_omega(&mut r, 3.0));
        let back = Rotation::from_quaternion(rot.to_quaternion());
        assert_relative_eq!(back.matrix(), rot.matrix(), epsilon = 1e-12);
    }
}

#[test]
fn reprojection_jacobians_match_central_differences() {
    let (pose, point) = reprojection_jacobian_error(1000, 21);
    assert!(pose < 1e-4, "pose twist: {pose:e}");
    assert!(point < 1e-4, "point: {point:e}");
}

#[test]
fn gauss_newton_point_agrees_with_grid_search() {
    for seed in 0..20 {
        let c = grid_search_check(100 + seed, 0.5, 60, 0.04);
        assert!(!c.on_boundary, "instance {seed}: grid box too small");
        assert!(c.cells_off <= 1.0, "instance {seed}: {} cells", c.cells_off);
    }
}

#[test]
fn noise_free_points_are_recovered_exactly() {
    let worst = noise_free_triangulation_error(200, 31);
    assert!(worst < 1e-6, "{worst:e} mm");
}

#[test]
fn pose_recovery_from_five_degrees_and_ten_mm() {
    for seed in 0..100 {
        let t = pose_recovery_trial(seed, 10, 5.0, 10.0);
        assert!(t.position_mm < 1e-6 && t.orientation_deg < 1e-6, "trial {seed}: {} mm {}°", t.position_mm, t.orientation_deg);
    }
}

#[test]
fn refinement_tolerates_pixel_noise() {
    // not exact any more, but close to the truth
    let k = k64();
    let mut r = rng(8);
    let truth = random_pose(&mut r, 30.0);
    let matches: Vec<Correspondence> = (0..40)
        .map(|_| {
            let px = Vector2::new(r.gen_range(2.0..62.0), r.gen_range(2.0..62.0));
            let v = back_project(&truth, &k, px, r.gen_range(20.0..60.0));
            (v, px + Vector2::new(r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5)))
        })
        .collect();
    let start = truth.retract_left(&Twist::new(Vector3::new(0.03, -0.02, 0.05), Vector3::new(3.0, -2.0, 4.0)));
    let out = refine_pose(&start, &matches, &k, &SolverConfig::default()).unwrap();
    assert!(out.converged);
    assert!((out.pose.position - truth.position).norm() < 2.0);
    assert!(out.rms < 0.5);
}

/// Frames whose keypoints are exact projections of known landmarks, each
/// landmark carrying a unique random descriptor.
fn synthetic_frames(landmarks: &[Vector3<f64>], poses: &[Pose], k: &CameraIntrinsics, seed: u64) -> Vec<FrameFeatures> {
    let mut r = rng(seed);
    let descriptors: Vec<Descriptor> = landmarks
        .iter()
        .map(|_| Descriptor::normalized((0..DESCRIPTOR_LEN).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap())
        .collect();
    poses
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let mut f = FrameFeatures { image_index: 10 + i, ..Default::default() };
            for (v, d) in landmarks.iter().zip(&descriptors) {
                if let Some(pixel) = project(pose, k, v).filter(|u| k.contains(u)) {
                    f.keypoints.push(Keypoint { pixel, scale: 0, sigma: 1.6, response: 1.0 });
                    f.descriptors.push(d.clone());
                }
            }
            f
        })
        .collect()
}

#[test]
fn injected_landmarks_are_triangulated_in_place() {
    let k = k64();
    let mut r = rng(5);
    // a short forward-moving sequence looking down +z
    let poses: Vec<Pose> = (0..6)
        .map(|i| Pose::new(Rotation::exp(&Vector3::new(0.0, 0.02 * i as f64, 0.0)), Vector3::new(i as f64 * 3.0, 0.0, 0.0)))
        .collect();
    let landmarks: Vec<Vector3<f64>> = (0..60)
        .map(|_| back_project(&poses[2], &k, Vector2::new(r.gen_range(8.0..56.0), r.gen_range(8.0..56.0)), r.gen_range(30.0..90.0)))
        .collect();
    let frames = synthetic_frames(&landmarks, &poses, &k, 6);
    let map = build_zone_map(4, &frames, &poses, &k, 10.0, 0.8).unwrap();
    assert!(map.len() >= 50, "only {} of 60 landmarks mapped", map.len());
    for p in &map {
        let nearest = landmarks.iter().map(|v| (v - p.position).norm()).fold(f64::INFINITY, f64::min);
        assert!(nearest < 1e-4, "{nearest} mm");
        assert_eq!(p.zone_id, 4);
        assert!(p.max_reproj_error < 1e-6);
    }
}

#[test]
fn zone_map_filter_drops_inconsistent_tracks() {
    let k = k64();
    let mut r = rng(9);
    let poses: Vec<Pose> = (0..4).map(|i| Pose::new(Rotation::identity(), Vector3::new(i as f64 * 4.0, 0.0, 0.0))).collect();
    let landmarks: Vec<Vector3<f64>> = (0..30)
        .map(|_| back_project(&poses[1], &k, Vector2::new(r.gen_range(10.0..54.0), r.gen_range(10.0..54.0)), r.gen_range(30.0..60.0)))
        .collect();
    let mut frames = synthetic_frames(&landmarks, &poses, &k, 2);
    // drag every other keypoint of the last frame far off its landmark
    for kp in frames[3].keypoints.iter_mut().step_by(2) {
        kp.pixel.y += 25.0;
    }
    let map = build_zone_map(0, &frames, &poses, &k, 10.0, 0.8).unwrap();
    assert!(!map.is_empty() && map.len() < frames[3].len(), "{} points", map.len());
    let max = map.iter().map(|p| p.max_reproj_error).fold(0.0, f64::max);
    assert!(max <= 10.0, "{max}");
}

#[test]
fn map_file_roundtrip() {
    let mut r = rng(4);
    let points: Vec<MapPoint> = (0..25)
        .map(|_| MapPoint {
            position: Vector3::new(r.gen_range(-50.0..50.0), r.gen_range(-50.0..50.0), r.gen_range(0.0..1500.0)),
            descriptor: Descriptor::normalized((0..DESCRIPTOR_LEN).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap(),
            zone_id: 7,
            max_reproj_error: r.gen_range(0.0..10.0),
        })
        .collect();
    let file = ZoneMapFile { zone_id: 7, delta_r: 10.0, points };
    let text = write_zone_map(&file);
    let back = read_zone_map(&text).unwrap();
    assert_eq!(back.points.len(), 25);
    assert_eq!(write_zone_map(&back), text);
    for (a, b) in back.points.iter().zip(&file.points) {
        assert_relative_eq!(a.position, b.position, max_relative = 1e-8);
    }
}
