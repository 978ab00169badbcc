use nalgebra::{Matrix6, Vector2, Vector3, Vector6};

use super::camera::{project, reprojection_with_jacobians, CameraIntrinsics};
use super::gn::{gauss_newton, GnFailure, Linearization, SolverConfig};
use super::lie::{Pose, Twist};
use super::GeomError;

pub const MIN_POSE_MATCHES: usize = 4;

/// Squared-pixel cost charged for a map point that lands behind the camera.
/// It carries no gradient, so such points only act through the line search.
const BEHIND_CAMERA_COST: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOutcome {
    pub pose: Pose,
    /// Root-mean-square re-projection error over all matches (px).
    pub rms: f64,
    pub converged: bool,
}

/// A 3D–2D correspondence as consumed by [`refine_pose`].
pub type Correspondence = (Vector3<f64>, Vector2<f64>);

pub fn pose_cost(pose: &Pose, matches: &[Correspondence], intrinsics: &CameraIntrinsics) -> f64 {
    matches
        .iter()
        .map(|(v, o)| match project(pose, intrinsics, v) {
            Some(u) => (u - o).norm_squared(),
            None => BEHIND_CAMERA_COST,
        })
        .sum()
}

fn linearize(pose: &Pose, matches: &[Correspondence], intrinsics: &CameraIntrinsics) -> Linearization<6> {
    let mut lin = Linearization::<6> { cost: 0.0, hessian: Matrix6::zeros(), gradient: Vector6::zeros() };
    for (v, o) in matches {
        match reprojection_with_jacobians(pose, intrinsics, v, o) {
            Some(j) => {
                lin.cost += j.residual.norm_squared();
                lin.hessian += j.d_pose.transpose() * j.d_pose;
                lin.gradient += j.d_pose.transpose() * j.residual;
            }
            None => lin.cost += BEHIND_CAMERA_COST,
        }
    }
    lin
}

/// Gauss-Newton over the camera pose with left-multiplicative twist updates,
/// map points held fixed.
pub fn refine_pose(
    initial: &Pose,
    matches: &[Correspondence],
    intrinsics: &CameraIntrinsics,
    config: &SolverConfig,
) -> Result<RefineOutcome, GeomError> {
    refine_pose_traced(initial, matches, intrinsics, config).map(|(o, _)| o)
}

/// Like [`refine_pose`], also returning the objective after each accepted step.
pub fn refine_pose_traced(
    initial: &Pose,
    matches: &[Correspondence],
    intrinsics: &CameraIntrinsics,
    config: &SolverConfig,
) -> Result<(RefineOutcome, Vec<f64>), GeomError> {
    if matches.len() < MIN_POSE_MATCHES {
        return Err(GeomError::InsufficientMatches(matches.len()));
    }
    let outcome = gauss_newton(
        *initial,
        config,
        |p| Some(linearize(p, matches, intrinsics)),
        |p| Some(pose_cost(p, matches, intrinsics)),
        |p, d| p.retract_left(&Twist(*d)),
    )
    .map_err(|e| match e {
        GnFailure::Singular | GnFailure::NotEvaluable => GeomError::SingularNormalEquations,
    })?;
    let rms = (outcome.cost / matches.len() as f64).sqrt();
    Ok((RefineOutcome { pose: outcome.state, rms, converged: outcome.converged }, outcome.history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::from_fov(64, 90.0).unwrap()
    }

    fn scene(pose: &Pose) -> Vec<Correspondence> {
        let mut out = Vec::new();
        for i in 0..12 {
            let a = i as f64 * 0.5;
            let v = Vector3::new(15.0 * a.cos(), 15.0 * a.sin(), 20.0 + 3.0 * i as f64);
            out.push((v, project(pose, &k(), &v).unwrap()));
        }
        out
    }

    #[test]
    fn true_pose_is_a_fixed_point() {
        let pose = Pose::identity();
        let out = refine_pose(&pose, &scene(&pose), &k(), &SolverConfig::default()).unwrap();
        assert_eq!(out.pose, pose);
        assert_eq!(out.rms, 0.0);
        assert!(out.converged);
    }

    #[test]
    fn three_matches_are_not_enough() {
        let pose = Pose::identity();
        let m = scene(&pose);
        assert_eq!(
            refine_pose(&pose, &m[..3], &k(), &SolverConfig::default()),
            Err(GeomError::InsufficientMatches(3))
        );
    }

    #[test]
    fn collinear_points_are_singular() {
        let pose = Pose::identity();
        let m: Vec<_> = (0..6)
            .map(|i| {
                let v = Vector3::new(0.0, 0.0, 10.0 + i as f64);
                (v, project(&pose, &k(), &v).unwrap() + Vector2::new(0.5, 0.0))
            })
            .collect();
        assert_eq!(
            refine_pose(&pose, &m, &k(), &SolverConfig::default()),
            Err(GeomError::SingularNormalEquations)
        );
    }
}
