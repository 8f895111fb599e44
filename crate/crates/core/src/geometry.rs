//! Rotation algebra and camera projection models.
//!
//! Rotations are `R = R_Z(roll) · R_Y(yaw) · R_X(pitch)`: pitch about X,
//! yaw about Y, roll about Z. Angles are degrees at the public surface of
//! [`EulerAngles`] and radians everywhere else.

use std::ops::Mul;

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

/// Tolerance used when validating the orthonormality of rotation rows.
pub const ROTATION_TOLERANCE: f64 = 1e-10;

/// Yaw values closer than this (degrees) to ±90° cannot be decomposed.
pub const GIMBAL_LOCK_MARGIN_DEG: f64 = 1e-6;

/// A proper 3×3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix(Matrix3::identity())
    }

    /// Wraps `m` after checking orthonormal rows, `r3 = r1 × r2` and `det = +1`.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("rotation matrix has non-finite entries"));
        }
        let r1: Vector3<f64> = m.row(0).transpose();
        let r2: Vector3<f64> = m.row(1).transpose();
        let r3: Vector3<f64> = m.row(2).transpose();
        let tol = ROTATION_TOLERANCE;
        if r1.dot(&r2).abs() > tol
            || (r1.norm() - 1.0).abs() > tol
            || (r2.norm() - 1.0).abs() > tol
            || (r1.cross(&r2) - r3).amax() > tol
            || (m.determinant() - 1.0).abs() > tol
        {
            return Err(Error::invalid("matrix is not a proper rotation"));
        }
        Ok(RotationMatrix(m))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Row `i` (0-based) as a column vector.
    pub fn row(&self, i: usize) -> Vector3<f64> {
        self.0.row(i).transpose()
    }

    /// The first two rows, `[r1ᵀ; r2ᵀ]`, i.e. the orthographic projection.
    pub fn projection_rows(&self) -> Matrix2x3<f64> {
        self.0.fixed_rows::<2>(0).into_owned()
    }

    /// Largest deviation from the row relations `r1·r2 = 0`, `|r1| = |r2| = 1`,
    /// `r3 = r1 × r2`.
    pub fn orthonormality_error(&self) -> f64 {
        let (r1, r2, r3) = (self.row(0), self.row(1), self.row(2));
        [
            r1.dot(&r2).abs(),
            (r1.norm_squared() - 1.0).abs(),
            (r2.norm_squared() - 1.0).abs(),
            (r1.cross(&r2) - r3).amax(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> RotationMatrix {
        RotationMatrix(self.0.transpose())
    }
}

impl Mul<Vector3<f64>> for &RotationMatrix {
    type Output = Vector3<f64>;

    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

/// Pitch, yaw and roll. Stored in radians; constructed and reported in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles {
    pitch: f64,
    yaw: f64,
    roll: f64,
}

impl EulerAngles {
    pub fn from_degrees(pitch: f64, yaw: f64, roll: f64) -> Self {
        EulerAngles {
            pitch: pitch.to_radians(),
            yaw: yaw.to_radians(),
            roll: roll.to_radians(),
        }
    }

    pub fn from_radians(pitch: f64, yaw: f64, roll: f64) -> Self {
        EulerAngles { pitch, yaw, roll }
    }

    pub fn pitch_deg(&self) -> f64 {
        self.pitch.to_degrees()
    }

    pub fn yaw_deg(&self) -> f64 {
        self.yaw.to_degrees()
    }

    pub fn roll_deg(&self) -> f64 {
        self.roll.to_degrees()
    }

    /// `[pitch, yaw, roll]` in degrees.
    pub fn degrees(&self) -> [f64; 3] {
        [self.pitch_deg(), self.yaw_deg(), self.roll_deg()]
    }

    /// `[pitch, yaw, roll]` in radians.
    pub fn radians(&self) -> [f64; 3] {
        [self.pitch, self.yaw, self.roll]
    }

    pub fn is_finite(&self) -> bool {
        self.radians().iter().all(|a| a.is_finite())
    }
}

fn check_angle(angle: f64) -> Result<()> {
    if angle.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("angle {angle} is not finite")))
    }
}

/// Rotation by `angle` radians about the X axis.
pub fn rot_x(angle: f64) -> Result<RotationMatrix> {
    check_angle(angle)?;
    let (s, c) = angle.sin_cos();
    Ok(RotationMatrix(Matrix3::new(
        1.0, 0.0, 0.0, //
        0.0, c, -s, //
        0.0, s, c,
    )))
}

/// Rotation by `angle` radians about the Y axis.
pub fn rot_y(angle: f64) -> Result<RotationMatrix> {
    check_angle(angle)?;
    let (s, c) = angle.sin_cos();
    Ok(RotationMatrix(Matrix3::new(
        c, 0.0, s, //
        0.0, 1.0, 0.0, //
        -s, 0.0, c,
    )))
}

/// Rotation by `angle` radians about the Z axis.
pub fn rot_z(angle: f64) -> Result<RotationMatrix> {
    check_angle(angle)?;
    let (s, c) = angle.sin_cos();
    Ok(RotationMatrix(Matrix3::new(
        c, -s, 0.0, //
        s, c, 0.0, //
        0.0, 0.0, 1.0,
    )))
}

/// `R = R_Z(roll) · R_Y(yaw) · R_X(pitch)`, so that `r31 = -sin(yaw)`,
/// `r32 = cos(yaw)·sin(pitch)` and `r21 = sin(roll)·cos(yaw)`.
pub fn compose_rotation(angles: &EulerAngles) -> Result<RotationMatrix> {
    let [pitch, yaw, roll] = angles.radians();
    Ok(rot_z(roll)? * rot_y(yaw)? * rot_x(pitch)?)
}

/// Inverse of [`compose_rotation`] on the principal branch.
///
/// Pitch and roll use the two-argument arctangent; `r31` is clamped to
/// `[-1, 1]` before the yaw formula.
pub fn euler_from_rotation(r: &RotationMatrix) -> Result<EulerAngles> {
    let m = r.matrix();
    let r31 = m[(2, 0)].clamp(-1.0, 1.0);
    let (r32, r33) = (m[(2, 1)], m[(2, 2)]);
    let yaw = -r31.atan2(r32.hypot(r33));
    if 90.0 - yaw.to_degrees().abs() < GIMBAL_LOCK_MARGIN_DEG {
        return Err(Error::GimbalLock {
            yaw_deg: yaw.to_degrees(),
        });
    }
    let pitch = r32.atan2(r33);
    let roll = m[(1, 0)].atan2(m[(0, 0)]);
    Ok(EulerAngles { pitch, yaw, roll })
}

/// Scaled orthographic camera: `m = s'·([r1ᵀ; r2ᵀ]·M + t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakPerspectiveCamera {
    s_prime: f64,
    t: Vector2<f64>,
}

impl WeakPerspectiveCamera {
    pub fn new(s_prime: f64, t: Vector2<f64>) -> Result<Self> {
        if !(s_prime.is_finite() && s_prime > 0.0) {
            return Err(Error::invalid(format!("scale {s_prime} must be positive")));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("translation must be finite"));
        }
        Ok(WeakPerspectiveCamera { s_prime, t })
    }

    pub fn scale(&self) -> f64 {
        self.s_prime
    }

    pub fn translation(&self) -> Vector2<f64> {
        self.t
    }
}

impl Default for WeakPerspectiveCamera {
    fn default() -> Self {
        WeakPerspectiveCamera {
            s_prime: 1.0,
            t: Vector2::zeros(),
        }
    }
}

/// Pinhole camera with intrinsics `A` and extrinsic translation `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub principal_point: Vector2<f64>,
    pub t: Vector3<f64>,
}

impl PinholeCamera {
    pub fn new(
        alpha: f64,
        beta: f64,
        gamma: f64,
        principal_point: Vector2<f64>,
        t: Vector3<f64>,
    ) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::invalid("focal scales must be positive"));
        }
        if !gamma.is_finite()
            || principal_point.iter().any(|v| !v.is_finite())
            || t.iter().any(|v| !v.is_finite())
        {
            return Err(Error::invalid("camera parameters must be finite"));
        }
        Ok(PinholeCamera {
            alpha,
            beta,
            gamma,
            principal_point,
            t,
        })
    }

    /// Ideal camera: square pixels, no skew.
    pub fn ideal(focal: f64, principal_point: Vector2<f64>, t: Vector3<f64>) -> Result<Self> {
        Self::new(focal, focal, 0.0, principal_point, t)
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.alpha,
            self.gamma,
            self.principal_point.x,
            0.0,
            self.beta,
            self.principal_point.y,
            0.0,
            0.0,
            1.0,
        )
    }

    /// The weak-perspective camera this one approaches as `t3` grows:
    /// `s' = α/t3`, with the principal point folded into the translation.
    /// Only defined for square pixels without skew.
    pub fn weak_limit(&self) -> Result<WeakPerspectiveCamera> {
        if self.t.z <= 0.0 {
            return Err(Error::BehindCamera { depth: self.t.z });
        }
        if self.alpha != self.beta || self.gamma != 0.0 {
            return Err(Error::invalid(
                "weak limit needs alpha = beta and zero skew",
            ));
        }
        let s_prime = self.alpha / self.t.z;
        WeakPerspectiveCamera::new(s_prime, self.t.xy() + self.principal_point / s_prime)
    }
}

pub fn project_weak(
    camera: &WeakPerspectiveCamera,
    r: &RotationMatrix,
    point: &Vector3<f64>,
) -> Vector2<f64> {
    camera.s_prime * (r.projection_rows() * point + camera.t)
}

pub fn project_full(
    camera: &PinholeCamera,
    r: &RotationMatrix,
    point: &Vector3<f64>,
) -> Result<Vector2<f64>> {
    let homogeneous = camera.intrinsics() * (r.matrix() * point + camera.t);
    let depth = homogeneous.z;
    if depth.is_nan() || depth <= 0.0 {
        return Err(Error::BehindCamera { depth });
    }
    Ok(homogeneous.xy() / depth)
}

/// Closest matrix (Frobenius) with orthonormal rows: the polar factor `U·Vᵀ`.
pub fn nearest_row_orthonormal(m: &Matrix2x3<f64>) -> Result<Matrix2x3<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput(
            "matrix has non-finite entries".into(),
        ));
    }
    let svd = m.svd(true, true);
    let (s_max, s_min) = (svd.singular_values.max(), svd.singular_values.min());
    if s_min.is_nan() || s_min <= 1e-12 * s_max {
        return Err(Error::DegenerateInput(format!(
            "2x3 matrix is rank deficient (singular values {s_max:e}, {s_min:e})"
        )));
    }
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    Ok(u * v_t)
}

/// Stacks `r1`, `r2` and `r1 × r2` as rows.
pub fn complete_rotation(r1: &Vector3<f64>, r2: &Vector3<f64>) -> Result<RotationMatrix> {
    const TOL: f64 = 1e-8;
    if r1.dot(r2).abs() > TOL || (r1.norm() - 1.0).abs() > TOL || (r2.norm() - 1.0).abs() > TOL {
        return Err(Error::invalid("rows are not orthonormal"));
    }
    let r3 = r1.cross(r2);
    Ok(RotationMatrix(Matrix3::from_rows(&[
        r1.transpose(),
        r2.transpose(),
        r3.transpose(),
    ])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn naive_matmul(a: &Matrix3<f64>, b: &Matrix3<f64>) -> Matrix3<f64> {
        let mut out = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    #[test]
    fn quarter_turn_about_x() {
        let r = rot_x(90f64.to_radians()).unwrap();
        let v = &r * Vector3::new(0.0, 1.0, 0.0);
        assert_abs_diff_eq!(v, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn factor_values() {
        assert_eq!(rot_y(0.0).unwrap(), RotationMatrix::identity());
        let rz = rot_z(30f64.to_radians()).unwrap();
        assert_abs_diff_eq!(rz.matrix()[(0, 0)], 0.8660254037844387, epsilon = 1e-15);
        assert!(rot_x(f64::NAN).is_err());
        assert!(rot_z(f64::INFINITY).is_err());
    }

    #[test]
    fn compose_identity_and_r31() {
        let r = compose_rotation(&EulerAngles::default()).unwrap();
        assert_eq!(r, RotationMatrix::identity());
        let r = compose_rotation(&EulerAngles::from_degrees(10.0, 20.0, 30.0)).unwrap();
        assert_abs_diff_eq!(r.matrix()[(2, 0)], -0.3420201433256687, epsilon = 1e-15);
    }

    #[test]
    fn compose_matches_factor_product_and_closed_form() {
        let (x, y, z) = (13f64.to_radians(), (-41f64).to_radians(), 7f64.to_radians());
        let expected = naive_matmul(
            &naive_matmul(rot_z(z).unwrap().matrix(), rot_y(y).unwrap().matrix()),
            rot_x(x).unwrap().matrix(),
        );
        let r = compose_rotation(&EulerAngles::from_radians(x, y, z)).unwrap();
        assert_abs_diff_eq!(*r.matrix(), expected, epsilon = 1e-15);

        let (sx, cx, sy, cy, sz, cz) = (x.sin(), x.cos(), y.sin(), y.cos(), z.sin(), z.cos());
        let closed = Matrix3::new(
            cz * cy,
            cz * sy * sx - sz * cx,
            cz * sy * cx + sz * sx,
            sz * cy,
            sz * sy * sx + cz * cx,
            sz * sy * cx - cz * sx,
            -sy,
            cy * sx,
            cy * cx,
        );
        assert_abs_diff_eq!(*r.matrix(), closed, epsilon = 1e-15);
        assert!(RotationMatrix::from_matrix(*r.matrix()).is_ok());
    }

    #[test]
    fn euler_examples() {
        let a = euler_from_rotation(&RotationMatrix::identity()).unwrap();
        assert_eq!(a.degrees(), [0.0, 0.0, 0.0]);

        let r = compose_rotation(&EulerAngles::from_degrees(10.0, 20.0, 30.0)).unwrap();
        let a = euler_from_rotation(&r).unwrap();
        for (got, want) in a.degrees().iter().zip([10.0, 20.0, 30.0]) {
            assert!((got - want).abs() < 1e-9);
        }

        let locked = rot_y(90f64.to_radians()).unwrap();
        assert_abs_diff_eq!(locked.matrix()[(2, 0)], -1.0, epsilon = 1e-15);
        assert!(matches!(
            euler_from_rotation(&locked),
            Err(Error::GimbalLock { .. })
        ));
    }

    #[test]
    fn weak_projection_examples() {
        let p = Vector3::new(3.0, 4.0, 5.0);
        let id = RotationMatrix::identity();
        let cam = WeakPerspectiveCamera::default();
        assert_eq!(project_weak(&cam, &id, &p), Vector2::new(3.0, 4.0));
        let cam = WeakPerspectiveCamera::new(2.0, Vector2::new(1.0, 1.0)).unwrap();
        assert_eq!(project_weak(&cam, &id, &p), Vector2::new(8.0, 10.0));
        let rz = rot_z(90f64.to_radians()).unwrap();
        let q = project_weak(&WeakPerspectiveCamera::default(), &rz, &Vector3::x());
        assert_abs_diff_eq!(q, Vector2::new(0.0, 1.0), epsilon = 1e-15);
        assert!(WeakPerspectiveCamera::new(0.0, Vector2::zeros()).is_err());
    }

    #[test]
    fn weak_limit_keeps_principal_point() {
        let cam = PinholeCamera::ideal(
            100.0,
            Vector2::new(320.0, 240.0),
            Vector3::new(2.0, -1.0, 10.0),
        )
        .unwrap();
        let weak = cam.weak_limit().unwrap();
        assert_abs_diff_eq!(weak.scale(), 10.0, epsilon = 1e-12);
        let id = RotationMatrix::identity();
        // zero depth offset: both models agree exactly
        let p = Vector3::new(3.0, 4.0, 0.0);
        assert_abs_diff_eq!(
            project_weak(&weak, &id, &p),
            project_full(&cam, &id, &p).unwrap(),
            epsilon = 1e-9
        );
        let skewed = PinholeCamera::new(
            100.0,
            100.0,
            1.0,
            Vector2::zeros(),
            Vector3::new(0.0, 0.0, 10.0),
        )
        .unwrap();
        assert!(skewed.weak_limit().is_err());
    }

    #[test]
    fn full_projection_examples() {
        let id = RotationMatrix::identity();
        let cam = PinholeCamera::ideal(1.0, Vector2::zeros(), Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(
            project_full(&cam, &id, &Vector3::zeros()).unwrap(),
            Vector2::zeros()
        );
        let cam = PinholeCamera::ideal(
            100.0,
            Vector2::new(320.0, 240.0),
            Vector3::new(0.0, 0.0, 10.0),
        )
        .unwrap();
        assert_abs_diff_eq!(
            project_full(&cam, &id, &Vector3::x()).unwrap(),
            Vector2::new(330.0, 240.0),
            epsilon = 1e-12
        );
        let behind =
            PinholeCamera::ideal(1.0, Vector2::zeros(), Vector3::new(0.0, 0.0, -1.0)).unwrap();
        assert!(matches!(
            project_full(&behind, &id, &Vector3::zeros()),
            Err(Error::BehindCamera { .. })
        ));
        assert!(PinholeCamera::ideal(0.0, Vector2::zeros(), Vector3::z()).is_err());
    }

    #[test]
    fn nearest_orthonormal_examples() {
        let e = Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        assert_abs_diff_eq!(nearest_row_orthonormal(&e).unwrap(), e, epsilon = 1e-15);
        let scaled = Matrix2x3::new(2.0, 0.0, 0.0, 0.0, 3.0, 0.0);
        assert_abs_diff_eq!(
            nearest_row_orthonormal(&scaled).unwrap(),
            e,
            epsilon = 1e-15
        );
        let rank1 = Matrix2x3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0);
        assert!(matches!(
            nearest_row_orthonormal(&rank1),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn complete_rotation_examples() {
        let r = complete_rotation(&Vector3::x(), &Vector3::y()).unwrap();
        assert_eq!(r, RotationMatrix::identity());
        let r = complete_rotation(&Vector3::y(), &Vector3::z()).unwrap();
        assert_eq!(r.row(2), Vector3::x());
        assert_eq!(
            &r * Vector3::new(1.0, 2.0, 3.0),
            Vector3::new(2.0, 3.0, 1.0)
        );
        assert!(complete_rotation(&Vector3::x(), &Vector3::new(1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn complete_rotation_from_qr_has_unit_determinant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let m = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let q = m.qr().q();
            let r1: Vector3<f64> = q.column(0).into();
            let r2: Vector3<f64> = q.column(1).into();
            let r = complete_rotation(&r1, &r2).unwrap();
            assert!((r.matrix().determinant() - 1.0).abs() < 1e-10);
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn euler_round_trip(p in -179.0..179.0f64, y in -89.0..89.0f64, r in -179.0..179.0f64) {
                let a = EulerAngles::from_degrees(p, y, r);
                let rot = compose_rotation(&a).unwrap();
                prop_assert!(rot.orthonormality_error() < 1e-12);
                let back = euler_from_rotation(&rot).unwrap();
                for (got, want) in back.degrees().iter().zip(a.degrees()) {
                    prop_assert!((got - want).abs() < 1e-9, "{got} vs {want}");
                }
            }

            #[test]
            fn nearest_orthonormal_is_idempotent(v in proptest::array::uniform6(-5.0..5.0f64)) {
                let m = Matrix2x3::from_row_slice(&v);
                prop_assume!(m.svd(false, false).singular_values.min() > 1e-3);
                let q = nearest_row_orthonormal(&m).unwrap();
                let (r1, r2) = (q.row(0), q.row(1));
                prop_assert!(r1.dot(&r2).abs() < 1e-12);
                prop_assert!((r1.norm() - 1.0).abs() < 1e-12);
                prop_assert!((r2.norm() - 1.0).abs() < 1e-12);
                let qq = nearest_row_orthonormal(&q).unwrap();
                prop_assert!((qq - q).amax() < 1e-12);
            }
        }
    }
}
