use nalgebra::{Matrix2x3, Matrix2x6, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::lie::{hat, Pose};
use super::GeomError;
use crate::features::Descriptor;

/// Camera-frame depth at or below which a point counts as behind the camera (mm).
pub const DEPTH_EPSILON: f64 = 1e-6;

/// Ideal pinhole intrinsics. Pixel centers sit at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self, GeomError> {
        let k = CameraIntrinsics { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    /// Square image with the principal point at the center and the given
    /// horizontal field of view.
    pub fn from_fov(size: usize, fov_deg: f64) -> Result<Self, GeomError> {
        let c = (size as f64 - 1.0) / 2.0;
        let f = (size as f64 / 2.0) / (fov_deg.to_radians() / 2.0).tan();
        Self::new(f, f, c, c, size, size)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(GeomError::InvalidIntrinsics)
        }
    }

    /// Pixel of a camera-frame point, `None` if it is not in front of the camera.
    pub fn project_camera(&self, pc: &Vector3<f64>) -> Option<Vector2<f64>> {
        if pc.z <= DEPTH_EPSILON {
            return None;
        }
        Some(Vector2::new(self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy))
    }

    /// Normalized image coordinates `K⁻¹ u` (first two entries).
    pub fn normalize(&self, u: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((u.x - self.cx) / self.fx, (u.y - self.cy) / self.fy)
    }

    /// Whether a pixel lies inside the sensor, borders included.
    pub fn contains(&self, u: &Vector2<f64>) -> bool {
        u.x >= -0.5 && u.y >= -0.5 && u.x <= self.width as f64 - 0.5 && u.y <= self.height as f64 - 0.5
    }

    /// Derivative of the pixel w.r.t. the camera-frame point.
    pub fn projection_jacobian(&self, pc: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / pc.z;
        let iz2 = iz * iz;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * pc.x * iz2,
            0.0,
            self.fy * iz,
            -self.fy * pc.y * iz2,
        )
    }
}

/// Projects a world point through a camera pose. `None` means behind the camera.
pub fn project(pose: &Pose, intrinsics: &CameraIntrinsics, point: &Vector3<f64>) -> Option<Vector2<f64>> {
    intrinsics.project_camera(&pose.to_camera(point))
}

/// Re-projection residual `Π(pose, v) − u` and its Jacobians w.r.t. a left
/// twist on the pose and w.r.t. the world point.
#[derive(Debug, Clone, Copy)]
pub struct ResidualJacobians {
    pub residual: Vector2<f64>,
    pub d_pose: Matrix2x6<f64>,
    pub d_point: Matrix2x3<f64>,
}

pub fn reprojection_with_jacobians(
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    point: &Vector3<f64>,
    observed: &Vector2<f64>,
) -> Option<ResidualJacobians> {
    let pc = pose.to_camera(point);
    let pixel = intrinsics.project_camera(&pc)?;
    let jp = intrinsics.projection_jacobian(&pc);
    let rt: Matrix3<f64> = pose.rotation.matrix().transpose();
    // exp(δ)·T_wc moves the camera, so p_c = Rᵀ(exp(-δ)v - p) and
    // ∂p_c/∂δ = Rᵀ [ [v]× | -I ].
    let d_point = jp * rt;
    let d_rot = d_point * hat(point);
    let mut d_pose = Matrix2x6::zeros();
    d_pose.fixed_view_mut::<2, 3>(0, 0).copy_from(&d_rot);
    d_pose.fixed_view_mut::<2, 3>(0, 3).copy_from(&(-d_point));
    Some(ResidualJacobians { residual: pixel - observed, d_pose, d_point })
}

/// A pixel observation in one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation2D {
    pub pixel: Vector2<f64>,
    pub image_index: usize,
}

/// A triangulated landmark stored in a zone map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapPoint {
    pub position: Vector3<f64>,
    pub descriptor: Descriptor,
    pub zone_id: usize,
    pub max_reproj_error: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::lie::Twist;
    use nalgebra::Vector6;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(50.0, 55.0, 31.5, 30.0, 64, 64).unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let u = project(&Pose::identity(), &k(), &Vector3::new(0.0, 0.0, 7.0)).unwrap();
        assert_eq!(u, Vector2::new(31.5, 30.0));
    }

    #[test]
    fn points_at_or_behind_the_camera_are_signaled() {
        assert!(project(&Pose::identity(), &k(), &Vector3::new(1.0, 0.0, 0.0)).is_none());
        assert!(project(&Pose::identity(), &k(), &Vector3::new(1.0, 0.0, -3.0)).is_none());
        assert!(project(&Pose::identity(), &k(), &Vector3::new(1.0, 0.0, 1e-7)).is_none());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 3.9, 0.0, 4, 4).is_ok());
    }

    #[test]
    fn pose_jacobian_sign_matches_left_update() {
        let pose = Pose::exp(&Twist(Vector6::new(0.1, 0.2, -0.1, 1.0, 2.0, -3.0)));
        let v = Vector3::new(2.0, -1.0, 40.0);
        let u0 = Vector2::zeros();
        let j = reprojection_with_jacobians(&pose, &k(), &v, &u0).unwrap();
        let h = 1e-6;
        let mut d = Vector6::zeros();
        d[4] = h;
        let up = project(&pose.retract_left(&Twist(d)), &k(), &v).unwrap();
        d[4] = -h;
        let um = project(&pose.retract_left(&Twist(d)), &k(), &v).unwrap();
        let fd = (up - um) / (2.0 * h);
        assert!((fd - j.d_pose.column(4)).norm() < 1e-6);
    }
}
