//! Independent oracles shared by the integration tests and the acceptance
//! suite. Each returns the measured quantity; callers decide the tolerance.
#![allow(dead_code)]

use nalgebra::{Matrix2x3, Matrix2x6, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use tubeloc::classifier::{batch_loss, batch_loss_and_gradient, ArchConfig, EmbedModel, PairLabel, PairSample};
use tubeloc::eval::pose_errors;
use tubeloc::geom::{
    project, refine_pose, reprojection_with_jacobians, triangulate_point, CameraIntrinsics, Observation2D, Pose,
    Rotation, SolverConfig, Twist,
};
use tubeloc::image::Raster;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn k64() -> CameraIntrinsics {
    CameraIntrinsics::from_fov(64, 90.0).unwrap()
}

pub fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
    Vector3::new(x, y, z)
}

/// Axis-angle vector with angle uniform in `[0, max_angle)`.
pub fn random_omega(rng: &mut ChaCha8Rng, max_angle: f64) -> Vector3<f64> {
    unit(rng) * rng.gen_range(0.0..max_angle)
}

pub fn random_pose(rng: &mut ChaCha8Rng, spread: f64) -> Pose {
    let p = Vector3::new(rng.gen_range(-spread..spread), rng.gen_range(-spread..spread), rng.gen_range(-spread..spread));
    Pose::new(Rotation::exp(&random_omega(rng, 3.0)), p)
}

/// Camera at `eye` whose optical axis points at `target`.
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, rng: &mut ChaCha8Rng) -> Pose {
    let z = (target - eye).normalize();
    let mut x = unit(rng).cross(&z);
    x.normalize_mut();
    let y = z.cross(&x);
    Pose::new(Rotation::from_matrix(Matrix3::from_columns(&[x, y, z]), 1e-9).unwrap(), eye)
}

/// World point seen at `pixel` with camera depth `depth`.
pub fn back_project(pose: &Pose, k: &CameraIntrinsics, pixel: Vector2<f64>, depth: f64) -> Vector3<f64> {
    let n = k.normalize(&pixel);
    pose.transform(&(Vector3::new(n.x, n.y, 1.0) * depth))
}

fn twist_distance(a: &Twist, b: &Twist) -> f64 {
    (a.omega() - b.omega()).norm().max((a.rho() - b.rho()).norm())
}

/// Worst exp/log round-trip error over `n` twists, both `log(exp(ξ)) = ξ`
/// and `exp(log(T)) = T`, with rotation angles kept clear of π.
pub fn lie_roundtrip_error(n: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        // every tenth case probes the small-angle branch
        let angle = if i % 10 == 0 { 1e-9 } else { 3.0 };
        let xi = Twist::new(random_omega(&mut r, angle), unit(&mut r) * r.gen_range(0.0..100.0));
        let t = Pose::exp(&xi);
        worst = worst.max(twist_distance(&t.log().unwrap(), &xi));
        let back = Pose::exp(&t.log().unwrap());
        worst = worst.max((back.rotation.matrix() - t.rotation.matrix()).amax());
        worst = worst.max((back.position - t.position).amax() / t.position.norm().max(1.0));
    }
    worst
}

/// Largest deviation from `RᵀR = I`, `det R = 1` and pose-inverse identity
/// after `n` random compositions.
pub fn composition_drift(n: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut acc = Pose::identity();
    for _ in 0..n {
        let step = Pose::new(Rotation::exp(&random_omega(&mut r, 3.0)), unit(&mut r));
        acc = step.compose(&acc);
    }
    let m = acc.rotation.matrix();
    let ortho = (m.transpose() * m - Matrix3::identity()).amax();
    let det = (m.determinant() - 1.0).abs();
    let ident = acc.compose(&acc.inverse());
    let inv = (ident.rotation.matrix() - Matrix3::identity()).amax().max(ident.position.amax() / n as f64);
    ortho.max(det).max(inv)
}

fn relative(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Worst relative disagreement of the re-projection Jacobians with central
/// differences, `(pose twist, point)`, over `n` random configurations.
pub fn reprojection_jacobian_error(n: usize, seed: u64) -> (f64, f64) {
    let k = k64();
    let mut r = rng(seed);
    let (mut worst_pose, mut worst_point): (f64, f64) = (0.0, 0.0);
    let mut done = 0;
    while done < n {
        let pose = random_pose(&mut r, 50.0);
        let pixel = Vector2::new(r.gen_range(4.0..60.0), r.gen_range(4.0..60.0));
        let v = back_project(&pose, &k, pixel, r.gen_range(5.0..100.0));
        let observed = pixel + Vector2::new(r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0));
        let Some(j) = reprojection_with_jacobians(&pose, &k, &v, &observed) else { continue };
        let residual = |p: &Pose, x: &Vector3<f64>| project(p, &k, x).unwrap() - observed;

        let mut d_pose = Matrix2x6::zeros();
        for c in 0..6 {
            let h = if c < 3 { 1e-6 } else { 1e-5 };
            let mut e = nalgebra::Vector6::zeros();
            e[c] = h;
            let tw = |s: f64| Twist::new(e.fixed_rows::<3>(0) * s, e.fixed_rows::<3>(3) * s);
            let up = residual(&pose.retract_left(&tw(1.0)), &v);
            let down = residual(&pose.retract_left(&tw(-1.0)), &v);
            d_pose.set_column(c, &((up - down) / (2.0 * h)));
        }
        let mut d_point = Matrix2x3::zeros();
        for c in 0..3 {
            let mut e = Vector3::zeros();
            e[c] = 1e-5;
            d_point.set_column(c, &((residual(&pose, &(v + e)) - residual(&pose, &(v - e))) / 2e-5));
        }
        // scale-aware: entries are compared against the matrix's own magnitude
        let pose_scale = j.d_pose.amax();
        let point_scale = j.d_point.amax();
        for (a, b) in j.d_pose.iter().zip(d_pose.iter()) {
            worst_pose = worst_pose.max(relative(*a, *b, 1e-3 * pose_scale));
        }
        for (a, b) in j.d_point.iter().zip(d_point.iter()) {
            worst_point = worst_point.max(relative(*a, *b, 1e-3 * point_scale));
        }
        done += 1;
    }
    (worst_pose, worst_point)
}

/// Worst relative disagreement of the contrastive-loss gradient with central
/// differences. Checks `params` randomly chosen coordinates (all of them
/// when `None`) of a freshly initialized model on one random batch.
pub fn model_gradient_error(arch: &ArchConfig, seed: u64, params: Option<usize>) -> f64 {
    let mut r = rng(seed);
    let size = arch.input_size;
    let images: Vec<Raster> = (0..6).map(|_| Raster::from_fn(size, size, |_, _| r.gen_range(-1.0..1.0))).collect();
    let pairs = [
        PairSample { a: 0, b: 1, label: PairLabel::Similar },
        PairSample { a: 2, b: 3, label: PairLabel::Dissimilar },
        PairSample { a: 4, b: 5, label: PairLabel::Dissimilar },
        PairSample { a: 1, b: 4, label: PairLabel::Similar },
    ];
    let mut model = EmbedModel::new(arch.clone(), seed).unwrap();
    let (_, analytic) = batch_loss_and_gradient(&model, &images, &pairs).unwrap();
    let coords: Vec<usize> = match params {
        None => (0..model.param_count()).collect(),
        Some(n) => (0..n).map(|_| r.gen_range(0..model.param_count())).collect(),
    };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in coords {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + h;
        let up = batch_loss(&model, &images, &pairs).unwrap();
        model.params_mut()[i] = orig - h;
        let down = batch_loss(&model, &images, &pairs).unwrap();
        model.params_mut()[i] = orig;
        worst = worst.max(relative(analytic[i], (up - down) / (2.0 * h), 1e-3));
    }
    worst
}

/// A point seen by 3–5 cameras spread around it, all looking at it.
pub fn triangulation_instance(r: &mut ChaCha8Rng, k: &CameraIntrinsics, noise_px: f64) -> (Vector3<f64>, Vec<(Observation2D, Pose)>) {
    let v = Vector3::new(r.gen_range(-20.0..20.0), r.gen_range(-20.0..20.0), r.gen_range(-20.0..20.0));
    let views = r.gen_range(3..=5);
    let noise = Normal::new(0.0, noise_px.max(f64::MIN_POSITIVE)).unwrap();
    let axis = unit(r);
    let mut obs = Vec::new();
    for i in 0..views {
        // eyes within ~45° of a common viewing direction
        let dir = (axis + unit(r) * 0.8).normalize();
        let pose = look_at(v + dir * r.gen_range(25.0..60.0), v, r);
        let mut pixel = project(&pose, k, &v).unwrap();
        if noise_px > 0.0 {
            pixel += Vector2::new(noise.sample(r), noise.sample(r));
        }
        obs.push((Observation2D { pixel, image_index: i }, pose));
    }
    (v, obs)
}

fn cost(v: &Vector3<f64>, obs: &[(Observation2D, Pose)], k: &CameraIntrinsics) -> f64 {
    obs.iter().map(|(o, p)| project(p, k, v).map_or(f64::INFINITY, |u| (u - o.pixel).norm_squared())).sum()
}

pub struct GridCheck {
    /// `‖x_gn − x_grid‖_∞` in grid cells.
    pub cells_off: f64,
    /// The grid minimum touched the search box; the box was too small.
    pub on_boundary: bool,
}

/// Exhaustive search over a cubic grid of `2·half + 1` points per axis with
/// spacing `cell`, centered on the ground-truth point.
pub fn grid_search_check(seed: u64, noise_px: f64, half: i32, cell: f64) -> GridCheck {
    let k = k64();
    let mut r = rng(seed);
    let (v, obs) = triangulation_instance(&mut r, &k, noise_px);
    let gn = triangulate_point(&obs, &k).unwrap();
    let (mut best, mut arg) = (f64::INFINITY, (0, 0, 0));
    for i in -half..=half {
        for j in -half..=half {
            for l in -half..=half {
                let x = v + Vector3::new(i as f64, j as f64, l as f64) * cell;
                let c = cost(&x, &obs, &k);
                if c < best {
                    best = c;
                    arg = (i, j, l);
                }
            }
        }
    }
    let grid = v + Vector3::new(arg.0 as f64, arg.1 as f64, arg.2 as f64) * cell;
    let on_boundary = [arg.0, arg.1, arg.2].iter().any(|a| a.abs() == half);
    GridCheck { cells_off: (gn - grid).amax() / cell, on_boundary }
}

/// Worst triangulation error (mm) over `n` noise-free instances.
pub fn noise_free_triangulation_error(n: usize, seed: u64) -> f64 {
    let k = k64();
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let (v, obs) = triangulation_instance(&mut r, &k, 0.0);
            (triangulate_point(&obs, &k).unwrap() - v).norm()
        })
        .fold(0.0, f64::max)
}

pub struct RecoveryTrial {
    pub position_mm: f64,
    pub orientation_deg: f64,
}

/// Refines from a start rotated by exactly `angle_deg` about a random axis
/// and displaced by exactly `offset_mm`, with `matches` noise-free matches.
pub fn pose_recovery_trial(seed: u64, matches: usize, angle_deg: f64, offset_mm: f64) -> RecoveryTrial {
    let k = k64();
    let mut r = rng(seed);
    let truth = random_pose(&mut r, 100.0);
    let pts: Vec<(Vector3<f64>, Vector2<f64>)> = (0..matches)
        .map(|_| {
            let pixel = Vector2::new(r.gen_range(2.0..62.0), r.gen_range(2.0..62.0));
            (back_project(&truth, &k, pixel, r.gen_range(20.0..80.0)), pixel)
        })
        .collect();
    let rot = Rotation::exp(&(unit(&mut r) * angle_deg.to_radians()));
    let start = Pose::new(rot.compose(&truth.rotation), truth.position + unit(&mut r) * offset_mm);
    let out = refine_pose(&start, &pts, &k, &SolverConfig::default()).unwrap();
    let (position_mm, orientation_deg) = pose_errors(&out.pose, &truth);
    RecoveryTrial { position_mm, orientation_deg }
}

pub struct DeltaRAudit {
    pub points: usize,
    /// Observations re-projecting further than `delta_r`.
    pub violations: usize,
    pub worst_px: f64,
    /// Stored points whose track could not be re-identified.
    pub unmatched: usize,
}

/// Re-derives every zone's tracks from the same evenly selected frames and
/// re-projects each stored map point into all observations of its track,
/// identified by the track's representative descriptor.
pub fn audit_delta_r(
    partition: &tubeloc::zones::ZonePartition,
    images: &[Raster],
    poses: &[Pose],
    k: &CameraIntrinsics,
    params: &tubeloc::zones::MapParams,
) -> DeltaRAudit {
    use tubeloc::features::{detect_and_describe, match_tracks};
    let mut audit = DeltaRAudit { points: 0, violations: 0, worst_px: 0.0, unmatched: 0 };
    for zone in &partition.zones {
        if zone.map.is_empty() {
            continue;
        }
        let picks: Vec<usize> = tubeloc::zones::even_selection(zone.members.len(), params.m_select)
            .into_iter()
            .map(|o| zone.members.start + o)
            .collect();
        let frames: Vec<_> = picks.iter().map(|&i| detect_and_describe(&images[i], &params.detector, i).unwrap()).collect();
        let tracks = match_tracks(&frames, params.detector.ratio);
        for p in &zone.map {
            audit.points += 1;
            let Some(track) = tracks.iter().find(|t| t.descriptor == p.descriptor) else {
                audit.unmatched += 1;
                continue;
            };
            for &(image, kp) in &track.observations {
                let f = picks.iter().position(|&i| i == image).unwrap();
                let err = project(&poses[image], k, &p.position).map_or(f64::INFINITY, |u| (u - frames[f].keypoints[kp].pixel).norm());
                audit.worst_px = audit.worst_px.max(err);
                if err > params.delta_r {
                    audit.violations += 1;
                }
            }
        }
    }
    audit
}
