use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use super::cloud::PointCloud;
use crate::error::{Error, Result};

/// Tolerance on `RᵀR = I` and `det R = +1` enforced at construction.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Rigid SE(3) transform mapping `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let err = orthogonality_error(&rotation);
        if err > ROTATION_TOLERANCE || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::NonRigidRotation(err));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Caller guarantees `rotation` is a proper rotation (e.g. it came out of
    /// an exponential map or a composition of valid poses).
    pub(crate) fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::from_parts(Matrix3::identity(), t)
    }

    /// Rotation about +z by `yaw` radians followed by translation `t`.
    pub fn from_yaw(yaw: f64, t: Vector3<f64>) -> Self {
        Self::from_parts(yaw_matrix(yaw), t)
    }

    pub fn from_axis_angle(omega: Vector3<f64>, t: Vector3<f64>) -> Self {
        Self::from_parts(so3_exp(&omega), t)
    }

    /// Nearest proper rotation to `m` (polar decomposition via SVD).
    pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd u");
        let vt = svd.v_t.expect("svd v_t");
        let mut d = Matrix3::identity();
        if (u * vt).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        u * d * vt
    }

    #[inline]
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose::from_parts(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidPose {
        let rt = self.rotation.transpose();
        RigidPose::from_parts(rt, -(rt * self.translation))
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud
                .points
                .iter()
                .map(|p| p.moved_to(self.transform_point(p.xyz())))
                .collect(),
            frame_id: cloud.frame_id.clone(),
        }
    }

    /// SE(3) exponential of `[ω, ρ]` (rotation first).
    pub fn exp(xi: &Vector6<f64>) -> RigidPose {
        let omega = Vector3::new(xi[0], xi[1], xi[2]);
        let rho = Vector3::new(xi[3], xi[4], xi[5]);
        let rotation = so3_exp(&omega);
        RigidPose::from_parts(rotation, left_jacobian(&omega) * rho)
    }

    /// SE(3) logarithm returned as `[ω, ρ]` with `t = V(ω)·ρ`.
    pub fn log(&self) -> Vector6<f64> {
        let omega = so3_log(&self.rotation);
        let rho = left_jacobian_inverse(&omega) * self.translation;
        Vector6::new(omega.x, omega.y, omega.z, rho.x, rho.y, rho.z)
    }

    /// Adjoint in the `[ω, ρ]` ordering.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let mut adj = Matrix6::zeros();
        let r = self.rotation;
        let tr = skew(&self.translation) * r;
        adj.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        adj.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        adj.fixed_view_mut::<3, 3>(3, 0).copy_from(&tr);
        adj
    }

    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    /// Rows of `[R | t]` in row-major order (KITTI pose line layout).
    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ]
    }
}

pub fn yaw_matrix(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub(crate) fn orthogonality_error(r: &Matrix3<f64>) -> f64 {
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = (r.determinant() - 1.0).abs();
    if ortho.is_nan() || det.is_nan() {
        return f64::INFINITY;
    }
    ortho.max(det)
}

/// Rodrigues' formula.
pub fn so3_exp(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let k = skew(omega);
    if theta2 < 1e-16 {
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let theta = theta2.sqrt();
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / theta2;
    Matrix3::identity() + a * k + b * k * k
}

/// Axis-angle vector with `‖ω‖ ∈ [0, π]`.
pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let vee = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    if theta < 1e-8 {
        // First-order series of θ / (2 sin θ).
        return 0.5 * (1.0 + theta * theta / 6.0) * vee;
    }
    if PI - theta > 1e-6 {
        return theta / (2.0 * theta.sin()) * vee;
    }
    // Near π: (R + Rᵀ)/2 = cos θ·I + (1 − cos θ)·aaᵀ; take the dominant
    // column of aaᵀ and fix the sign from vee.
    let sym = ((r + r.transpose()) * 0.5 - Matrix3::identity() * cos) / (1.0 - cos);
    let diag = Vector3::new(sym[(0, 0)], sym[(1, 1)], sym[(2, 2)]);
    let k = diag.imax();
    let mut axis = sym.column(k).into_owned();
    axis /= axis.norm();
    if axis.dot(&vee) < 0.0 {
        axis = -axis;
    }
    theta * axis
}

/// `V(ω)` with `t = V(ω)·ρ` in the SE(3) exponential.
fn left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let k = skew(omega);
    if theta2 < 1e-12 {
        return Matrix3::identity() + 0.5 * k + k * k / 6.0;
    }
    let theta = theta2.sqrt();
    let b = (1.0 - theta.cos()) / theta2;
    let c = (theta - theta.sin()) / (theta2 * theta);
    Matrix3::identity() + b * k + c * k * k
}

fn left_jacobian_inverse(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let k = skew(omega);
    if theta2 < 1e-12 {
        return Matrix3::identity() - 0.5 * k + k * k / 12.0;
    }
    let theta = theta2.sqrt();
    let half = 0.5 * theta;
    let coeff = (1.0 - half * half.cos() / half.sin()) / theta2;
    Matrix3::identity() - 0.5 * k + coeff * k * k
}

/// Geodesic angle between two rotations, in degrees.
pub fn rotation_geodesic_error(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let cos = (((a.transpose() * b).trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    cos.acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn arb_pose() -> impl Strategy<Value = RigidPose> {
        (
            prop::array::uniform3(-1.7f64..1.7),
            prop::array::uniform3(-20.0f64..20.0),
        )
            .prop_map(|(w, t)| {
                RigidPose::from_axis_angle(Vector3::from(w), Vector3::from(t))
            })
    }

    fn pose_close(a: &RigidPose, b: &RigidPose, tol: f64) -> bool {
        (a.rotation() - b.rotation()).abs().max() < tol
            && (a.translation() - b.translation()).abs().max() < tol
    }

    #[test]
    fn identity_is_neutral() {
        let t = RigidPose::from_axis_angle(Vector3::new(0.3, -0.2, 0.9), Vector3::new(1.0, 2.0, 3.0));
        assert!(pose_close(&t.compose(&RigidPose::identity()), &t, 1e-15));
        assert!(pose_close(&t.inverse().compose(&t), &RigidPose::identity(), 1e-12));
    }

    #[test]
    fn log_of_quarter_yaw() {
        let xi = RigidPose::from_yaw(PI / 2.0, Vector3::zeros()).log();
        assert_relative_eq!(xi[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(xi[1], 0.0, epsilon = 1e-15);
        assert_relative_eq!(xi[2], PI / 2.0, epsilon = 1e-12);
        assert_eq!(xi.fixed_rows::<3>(3).norm(), 0.0);
    }

    #[test]
    fn geodesic_error_examples() {
        let i = Matrix3::identity();
        assert_eq!(rotation_geodesic_error(&i, &i), 0.0);
        assert_relative_eq!(rotation_geodesic_error(&i, &yaw_matrix(PI / 2.0)), 90.0, epsilon = 1e-9);
        // Composition of z-rotations: angle difference is exactly 30°.
        let a = yaw_matrix(10f64.to_radians());
        let b = yaw_matrix(40f64.to_radians());
        assert_relative_eq!(rotation_geodesic_error(&a, &b), 30.0, epsilon = 1e-9);
    }

    #[test]
    fn log_near_pi_is_stable() {
        let omega = Vector3::new(1.0, 2.0, -0.5).normalize() * (PI - 1e-9);
        let back = so3_log(&so3_exp(&omega));
        assert!((back - omega).norm() < 1e-6, "{back:?} vs {omega:?}");
    }

    #[test]
    fn constructor_rejects_non_rigid() {
        let mut m = Matrix3::identity();
        m[(0, 1)] = 1e-3;
        assert!(RigidPose::new(m, Vector3::zeros()).is_err());
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidPose::new(reflection, Vector3::zeros()).is_err());
    }

    #[test]
    fn adjoint_moves_twists_between_frames() {
        let t = RigidPose::from_axis_angle(Vector3::new(0.2, 0.4, -0.3), Vector3::new(1.0, -2.0, 0.5));
        let xi = Vector6::new(0.01, -0.02, 0.03, 0.1, 0.2, -0.1);
        let lhs = t.compose(&RigidPose::exp(&xi)).compose(&t.inverse());
        let rhs = RigidPose::exp(&(t.adjoint() * xi));
        assert!(pose_close(&lhs, &rhs, 1e-12));
    }

    proptest! {
        #[test]
        fn exp_log_round_trip(w in prop::array::uniform3(-1.8f64..1.8), r in prop::array::uniform3(-10.0f64..10.0)) {
            let xi = Vector6::new(w[0], w[1], w[2], r[0], r[1], r[2]);
            prop_assume!(xi.fixed_rows::<3>(0).norm() < PI - 1e-3);
            let back = RigidPose::exp(&xi).log();
            prop_assert!((back - xi).abs().max() < 1e-9);
        }

        #[test]
        fn apply_respects_composition(a in arb_pose(), b in arb_pose(), p in prop::array::uniform3(-50.0f64..50.0)) {
            let cloud = PointCloud::from_points(vec![Point::new(p[0], p[1], p[2])]);
            let lhs = a.compose(&b).apply(&cloud);
            let rhs = a.apply(&b.apply(&cloud));
            prop_assert!((lhs.points[0].xyz() - rhs.points[0].xyz()).abs().max() < 1e-9);
        }

        #[test]
        fn inverse_is_two_sided(a in arb_pose()) {
            prop_assert!(pose_close(&a.compose(&a.inverse()), &RigidPose::identity(), 1e-12));
            prop_assert!(pose_close(&a.inverse().compose(&a), &RigidPose::identity(), 1e-12));
        }
    }
}
