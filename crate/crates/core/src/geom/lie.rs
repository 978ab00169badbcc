//! SO(3) / SE(3) types with exponential and logarithm maps.
//!
//! A [`Pose`] is the camera-to-world transform: `x_world = R * x_cam + p`.
//! Tangent vectors are ordered `[ω (rad); ρ (mm)]` and increments are applied
//! on the left, `T ← exp(δ) · T`.

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector6};

use super::GeomError;

const SMALL_ANGLE: f64 = 1e-8;
const PI_GUARD: f64 = 1e-6;

/// Skew-symmetric matrix `[v]×` such that `[v]× w = v × w`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// A 3×3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps a matrix after checking orthonormality and handedness.
    pub fn from_matrix(m: Matrix3<f64>, tol: f64) -> Result<Self, GeomError> {
        let r = Rotation(m);
        if r.is_valid(tol) {
            Ok(r)
        } else {
            Err(GeomError::NotARotation)
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// `RᵀR = I` entrywise and `det R = 1`, both within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let e = self.0.transpose() * self.0 - Matrix3::identity();
        e.iter().all(|x| x.abs() <= tol) && (self.0.determinant() - 1.0).abs() <= tol
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        let r = Rotation(self.0 * other.0);
        debug_assert!(r.is_valid(1e-6), "rotation drifted off SO(3)");
        r
    }

    pub fn inverse(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Rodrigues' formula.
    pub fn exp(omega: &Vector3<f64>) -> Rotation {
        let theta2 = omega.norm_squared();
        let theta = theta2.sqrt();
        let w = hat(omega);
        let (a, b) = if theta < SMALL_ANGLE {
            (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
        } else {
            let half = 0.5 * theta;
            (theta.sin() / theta, 2.0 * (half.sin() / theta).powi(2))
        };
        Rotation(Matrix3::identity() + w * a + w * w * b)
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let m = &self.0;
        let s = 0.5 * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm();
        let c = 0.5 * (m.trace() - 1.0);
        s.atan2(c)
    }

    /// Axis-angle vector. Fails when the angle is within `1e-6` of π, where
    /// the axis sign is ambiguous.
    pub fn log(&self) -> Result<Vector3<f64>, GeomError> {
        let m = &self.0;
        let v = 0.5 * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        let s = v.norm();
        let c = 0.5 * (m.trace() - 1.0);
        let theta = s.atan2(c);
        if std::f64::consts::PI - theta < PI_GUARD {
            return Err(GeomError::AngleAtPi);
        }
        if theta < SMALL_ANGLE {
            // sin θ / θ ≈ 1 - θ²/6
            return Ok(v * (1.0 + theta * theta / 6.0));
        }
        if theta < 3.0 {
            return Ok(v * (theta / s));
        }
        // Near π the skew part is small; recover the axis from the symmetric part.
        let sym = 0.5 * (m + m.transpose()) - Matrix3::identity() * c;
        let (mut k, mut best) = (0, sym[(0, 0)]);
        for i in 1..3 {
            if sym[(i, i)] > best {
                best = sym[(i, i)];
                k = i;
            }
        }
        let mut axis: Vector3<f64> = sym.column(k).into();
        axis /= axis.norm();
        if axis.dot(&v) < 0.0 {
            axis = -axis;
        }
        Ok(axis * theta)
    }

    pub fn from_quaternion(q: [f64; 4]) -> Rotation {
        let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
        Rotation(*uq.to_rotation_matrix().matrix())
    }

    /// Unit quaternion `[w, x, y, z]` with `w ≥ 0`.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(self.0);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let (w, x, y, z) = (q.w, q.i, q.j, q.k);
        if w < 0.0 {
            [-w, -x, -y, -z]
        } else {
            [w, x, y, z]
        }
    }
}

/// 6-DoF tangent vector: rotation part first (rad), then translation (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist(pub Vector6<f64>);

impl Twist {
    pub fn new(omega: Vector3<f64>, rho: Vector3<f64>) -> Self {
        Twist(Vector6::new(omega.x, omega.y, omega.z, rho.x, rho.y, rho.z))
    }

    pub fn zero() -> Self {
        Twist(Vector6::zeros())
    }

    pub fn omega(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into()
    }

    pub fn rho(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into()
    }
}

/// Left Jacobian of SO(3), the `V` matrix coupling rotation and translation.
fn left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = hat(omega);
    let (b, c) = if theta < SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let half = 0.5 * theta;
        (
            2.0 * (half.sin() / theta).powi(2),
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Matrix3::identity() + w * b + w * w * c
}

fn left_jacobian_inverse(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = hat(omega);
    let c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half * half.cos() / half.sin()) / theta2
    };
    Matrix3::identity() - w * 0.5 + w * w * c
}

/// Rigid transform from camera frame to world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub position: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Rotation, position: Vector3<f64>) -> Self {
        Pose { rotation, position }
    }

    pub fn identity() -> Self {
        Pose::new(Rotation::identity(), Vector3::zeros())
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            position: self.rotation.rotate(&other.position) + self.position,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.inverse();
        Pose {
            position: -rt.rotate(&self.position),
            rotation: rt,
        }
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.position
    }

    /// World point expressed in the camera frame.
    pub fn to_camera(&self, p_world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.matrix().tr_mul(&(p_world - self.position))
    }

    pub fn exp(twist: &Twist) -> Pose {
        let omega = twist.omega();
        Pose {
            rotation: Rotation::exp(&omega),
            position: left_jacobian(&omega) * twist.rho(),
        }
    }

    pub fn log(&self) -> Result<Twist, GeomError> {
        let omega = self.rotation.log()?;
        let rho = left_jacobian_inverse(&omega) * self.position;
        Ok(Twist::new(omega, rho))
    }

    /// Left-multiplicative update `exp(δ) · self`.
    pub fn retract_left(&self, delta: &Twist) -> Pose {
        Pose::exp(delta).compose(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_twist_is_identity() {
        let p = Pose::exp(&Twist::zero());
        assert_eq!(p.rotation.matrix(), &Matrix3::identity());
        assert_eq!(p.position, Vector3::zeros());
    }

    #[test]
    fn quarter_turn_about_z_maps_x_to_y() {
        let p = Pose::exp(&Twist::new(Vector3::new(0.0, 0.0, FRAC_PI_2), Vector3::zeros()));
        let y = p.rotation.rotate(&Vector3::x());
        assert_abs_diff_eq!(y, Vector3::y(), epsilon = 1e-15);
        assert_eq!(p.position, Vector3::zeros());
        let back = p.log().unwrap();
        assert_abs_diff_eq!(back.0, Vector6::new(0.0, 0.0, FRAC_PI_2, 0.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn tiny_angles_take_the_series_branch() {
        let t = Twist::new(Vector3::new(3e-9, -1e-9, 2e-9), Vector3::new(1.0, 2.0, 3.0));
        let back = Pose::exp(&t).log().unwrap();
        assert_abs_diff_eq!(back.0, t.0, epsilon = 1e-15);
    }

    #[test]
    fn log_near_pi_is_rejected() {
        let r = Rotation::exp(&Vector3::new(0.0, std::f64::consts::PI - 1e-8, 0.0));
        assert_eq!(r.log(), Err(GeomError::AngleAtPi));
    }

    #[test]
    fn log_close_to_pi_uses_symmetric_part() {
        let omega = Vector3::new(0.3, -0.5, 0.8).normalize() * (std::f64::consts::PI - 1e-3);
        let back = Rotation::exp(&omega).log().unwrap();
        assert_abs_diff_eq!(back, omega, epsilon = 1e-9);
    }

    #[test]
    fn pose_times_inverse_is_identity() {
        let p = Pose::exp(&Twist(Vector6::new(0.4, -1.1, 0.3, 12.0, -3.0, 40.0)));
        let e = p.compose(&p.inverse());
        assert_abs_diff_eq!(*e.rotation.matrix(), Matrix3::identity(), epsilon = 1e-12);
        assert_abs_diff_eq!(e.position, Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn quaternion_roundtrip_has_canonical_sign() {
        let r = Rotation::exp(&Vector3::new(0.0, 0.0, 3.0));
        let q = r.to_quaternion();
        assert!(q[0] >= 0.0);
        let back = Rotation::from_quaternion(q);
        assert_abs_diff_eq!(*back.matrix(), *r.matrix(), epsilon = 1e-14);
    }

    #[test]
    fn from_matrix_rejects_reflections() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert_eq!(Rotation::from_matrix(m, 1e-9), Err(GeomError::NotARotation));
    }
}
