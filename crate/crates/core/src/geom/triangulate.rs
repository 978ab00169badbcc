use nalgebra::{Matrix3, Matrix4, Vector2, Vector3};

use super::camera::{reprojection_with_jacobians, CameraIntrinsics, Observation2D, DEPTH_EPSILON};
use super::gn::{gauss_newton, GnFailure, Linearization, SolverConfig};
use super::lie::Pose;
use super::GeomError;

/// Condition number of the two-view linear system above which the rays are
/// treated as parallel.
pub const MAX_DLT_CONDITION: f64 = 1e12;

/// Index pair with the largest camera-center distance; ties go to the
/// lexicographically smallest pair.
pub fn widest_baseline_pair(poses: &[&Pose]) -> (usize, usize, f64) {
    let mut best = (0, 1, -1.0);
    for i in 0..poses.len() {
        for j in i + 1..poses.len() {
            let d = (poses[i].position - poses[j].position).norm();
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    best
}

/// Linear two-view triangulation in a frame centered between the cameras
/// and scaled by their baseline.
pub fn triangulate_dlt(
    a: (&Vector2<f64>, &Pose),
    b: (&Vector2<f64>, &Pose),
    intrinsics: &CameraIntrinsics,
) -> Result<Vector3<f64>, GeomError> {
    let center = 0.5 * (a.1.position + b.1.position);
    let scale = (a.1.position - b.1.position).norm();
    if scale <= f64::EPSILON {
        return Err(GeomError::Degenerate);
    }
    let mut m = Matrix4::zeros();
    for (row, (pixel, pose)) in [a, b].into_iter().enumerate() {
        let x = intrinsics.normalize(pixel);
        let rt = pose.rotation.matrix().transpose();
        let t = -rt * (pose.position - center) / scale;
        let p = |r: usize| nalgebra::RowVector4::new(rt[(r, 0)], rt[(r, 1)], rt[(r, 2)], t[r]);
        m.set_row(2 * row, &(x.x * p(2) - p(0)));
        m.set_row(2 * row + 1, &(x.y * p(2) - p(1)));
    }
    let svd = m.svd(false, true);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let largest = svd.singular_values[order[0]];
    let second_smallest = svd.singular_values[order[2]];
    if !(second_smallest > 0.0) || largest / second_smallest > MAX_DLT_CONDITION {
        return Err(GeomError::Degenerate);
    }
    let v_t = svd.v_t.ok_or(GeomError::Degenerate)?;
    let h = v_t.row(order[3]);
    if h[3].abs() <= f64::EPSILON * h.norm() {
        return Err(GeomError::Degenerate);
    }
    Ok(Vector3::new(h[0], h[1], h[2]) / h[3] * scale + center)
}

/// Sum of squared re-projection errors of one point, `None` if it falls
/// behind any observing camera.
pub fn point_cost(point: &Vector3<f64>, observations: &[(Observation2D, Pose)], intrinsics: &CameraIntrinsics) -> Option<f64> {
    observations.iter().try_fold(0.0, |acc, (obs, pose)| {
        let u = super::project(pose, intrinsics, point)?;
        Some(acc + (u - obs.pixel).norm_squared())
    })
}

/// Gauss-Newton over the point position with all poses held fixed.
pub fn refine_point(
    initial: Vector3<f64>,
    observations: &[(Observation2D, Pose)],
    intrinsics: &CameraIntrinsics,
    config: &SolverConfig,
) -> Result<(Vector3<f64>, f64), GeomError> {
    let linearize = |v: &Vector3<f64>| {
        let mut lin = Linearization::<3> { cost: 0.0, hessian: Matrix3::zeros(), gradient: Vector3::zeros() };
        for (obs, pose) in observations {
            let j = reprojection_with_jacobians(pose, intrinsics, v, &obs.pixel)?;
            lin.cost += j.residual.norm_squared();
            lin.hessian += j.d_point.transpose() * j.d_point;
            lin.gradient += j.d_point.transpose() * j.residual;
        }
        Some(lin)
    };
    let outcome = gauss_newton(
        initial,
        config,
        linearize,
        |v| point_cost(v, observations, intrinsics),
        |v, d| v + d,
    )
    .map_err(|e| match e {
        GnFailure::Singular | GnFailure::NotEvaluable => GeomError::Degenerate,
    })?;
    Ok((outcome.state, outcome.cost))
}

/// Two-view linear initialization from the widest-baseline pair followed by
/// Gauss-Newton over every observation.
pub fn triangulate_point(
    observations: &[(Observation2D, Pose)],
    intrinsics: &CameraIntrinsics,
) -> Result<Vector3<f64>, GeomError> {
    triangulate_point_with(observations, intrinsics, &SolverConfig::default())
}

pub fn triangulate_point_with(
    observations: &[(Observation2D, Pose)],
    intrinsics: &CameraIntrinsics,
    config: &SolverConfig,
) -> Result<Vector3<f64>, GeomError> {
    if observations.len() < 2 {
        return Err(GeomError::InsufficientObservations(observations.len()));
    }
    let poses: Vec<&Pose> = observations.iter().map(|(_, p)| p).collect();
    let (i, j, _) = widest_baseline_pair(&poses);
    let init = triangulate_dlt(
        (&observations[i].0.pixel, &observations[i].1),
        (&observations[j].0.pixel, &observations[j].1),
        intrinsics,
    )?;
    let in_front = |v: &Vector3<f64>| observations.iter().all(|(_, p)| p.to_camera(v).z > DEPTH_EPSILON);
    if !in_front(&init) {
        return Err(GeomError::Degenerate);
    }
    let (v, _) = refine_point(init, observations, intrinsics, config)?;
    if !in_front(&v) {
        return Err(GeomError::Degenerate);
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{project, Twist};
    use nalgebra::Vector6;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::from_fov(64, 90.0).unwrap()
    }

    fn observe(poses: &[Pose], v: &Vector3<f64>) -> Vec<(Observation2D, Pose)> {
        poses
            .iter()
            .enumerate()
            .map(|(i, p)| (Observation2D { pixel: project(p, &k(), v).unwrap(), image_index: i }, *p))
            .collect()
    }

    #[test]
    fn exact_three_view_recovery() {
        let poses = [
            Pose::identity(),
            Pose::exp(&Twist(Vector6::new(0.0, 0.05, 0.0, 5.0, 0.0, 0.0))),
            Pose::exp(&Twist(Vector6::new(0.02, -0.03, 0.0, -3.0, 4.0, 2.0))),
        ];
        let v = Vector3::new(3.0, -2.0, 35.0);
        let est = triangulate_point(&observe(&poses, &v), &k()).unwrap();
        assert!((est - v).norm() < 1e-6, "{}", (est - v).norm());
    }

    #[test]
    fn zero_baseline_is_degenerate() {
        let poses = [Pose::identity(), Pose::identity()];
        let obs = observe(&poses, &Vector3::new(1.0, 1.0, 20.0));
        assert_eq!(triangulate_point(&obs, &k()), Err(GeomError::Degenerate));
    }

    #[test]
    fn parallel_rays_are_degenerate() {
        // Camera moves along the ray through the point's pixel: both rays coincide.
        let v = Vector3::new(0.0, 0.0, 30.0);
        let poses = [Pose::identity(), Pose::new(crate::geom::Rotation::identity(), Vector3::new(0.0, 0.0, 5.0))];
        let obs = observe(&poses, &v);
        assert_eq!(triangulate_point(&obs, &k()), Err(GeomError::Degenerate));
    }

    #[test]
    fn single_observation_is_rejected() {
        let obs = observe(&[Pose::identity()], &Vector3::new(0.0, 0.0, 3.0));
        assert_eq!(triangulate_point(&obs, &k()), Err(GeomError::InsufficientObservations(1)));
    }

    #[test]
    fn widest_pair_is_chosen() {
        let a = Pose::identity();
        let b = Pose::new(crate::geom::Rotation::identity(), Vector3::new(1.0, 0.0, 0.0));
        let c = Pose::new(crate::geom::Rotation::identity(), Vector3::new(-4.0, 0.0, 0.0));
        assert_eq!(widest_baseline_pair(&[&a, &b, &c]).0..=widest_baseline_pair(&[&a, &b, &c]).1, 1..=2);
    }
}
