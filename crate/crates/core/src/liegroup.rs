//! Rotation and rigid-transform algebra.
//!
//! Rotations are stored as hemisphere-fixed unit quaternions. Rotation
//! matrices only appear inside the exponential/logarithm maps and the
//! geodesic angle. Twists are ordered `(translation, rotation)` so that the
//! first three residual rows line up with the translational weight block.

use nalgebra::{Matrix3, Matrix4, Matrix6, Vector3, Vector6};
use thiserror::Error;

/// Below this rotation angle the exp/log maps switch to Taylor expansions.
const SMALL_ANGLE: f64 = 1e-5;
/// Rotations closer than this to pi make the logarithm ambiguous.
pub const NEAR_PI_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum LieError {
    #[error("rotation angle {angle} is within {NEAR_PI_MARGIN} of pi; logarithm branch is ambiguous")]
    AngleNearPi { angle: f64 },
    #[error("quaternion has zero or non-finite norm")]
    DegenerateQuaternion,
    #[error("quaternion norm {norm} is not 1")]
    NotUnit { norm: f64 },
}

/// Unit quaternion `w + xi + yj + zk` with `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl UnitQuaternion {
    pub const fn identity() -> Self {
        Self {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    /// Normalizes the components and fixes the hemisphere.
    pub fn try_new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, LieError> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n == 0.0 {
            return Err(LieError::DegenerateQuaternion);
        }
        Ok(Self::canonical(w / n, x / n, y / n, z / n))
    }

    /// Keeps the components as given (up to the hemisphere sign) when their
    /// norm is within `tol` of 1.
    pub fn try_from_unit(w: f64, x: f64, y: f64, z: f64, tol: f64) -> Result<Self, LieError> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() {
            return Err(LieError::DegenerateQuaternion);
        }
        if (n - 1.0).abs() > tol {
            return Err(LieError::NotUnit { norm: n });
        }
        Ok(Self::canonical(w, x, y, z))
    }

    /// Like [`try_new`](Self::try_new) but panics on a zero quaternion.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self::try_new(w, x, y, z).expect("degenerate quaternion")
    }

    fn canonical(w: f64, x: f64, y: f64, z: f64) -> Self {
        if w < 0.0 {
            Self {
                w: -w,
                x: -x,
                y: -y,
                z: -z,
            }
        } else {
            Self { w, x, y, z }
        }
    }

    fn renormalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        Self::canonical(w / n, x / n, y / n, z / n)
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n;
        Self::renormalized(c, s * a.x, s * a.y, s * a.z)
    }

    /// SO(3) exponential of a rotation vector.
    pub fn from_rotation_vector(omega: &Vector3<f64>) -> Self {
        let theta = omega.norm();
        let half = 0.5 * theta;
        let k = if theta < SMALL_ANGLE {
            0.5 - theta * theta / 48.0
        } else {
            half.sin() / theta
        };
        Self::renormalized(half.cos(), k * omega.x, k * omega.y, k * omega.z)
    }

    /// Quaternion from a proper rotation matrix (Shepperd's method).
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let tr = m.trace();
        let (w, x, y, z);
        if tr > m[(0, 0)] && tr > m[(1, 1)] && tr > m[(2, 2)] {
            let s = (1.0 + tr).sqrt() * 2.0;
            w = 0.25 * s;
            x = (m[(2, 1)] - m[(1, 2)]) / s;
            y = (m[(0, 2)] - m[(2, 0)]) / s;
            z = (m[(1, 0)] - m[(0, 1)]) / s;
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            w = (m[(2, 1)] - m[(1, 2)]) / s;
            x = 0.25 * s;
            y = (m[(0, 1)] + m[(1, 0)]) / s;
            z = (m[(0, 2)] + m[(2, 0)]) / s;
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            w = (m[(0, 2)] - m[(2, 0)]) / s;
            x = (m[(0, 1)] + m[(1, 0)]) / s;
            y = 0.25 * s;
            z = (m[(1, 2)] + m[(2, 1)]) / s;
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            w = (m[(1, 0)] - m[(0, 1)]) / s;
            x = (m[(0, 2)] + m[(2, 0)]) / s;
            y = (m[(1, 2)] + m[(2, 1)]) / s;
            z = 0.25 * s;
        }
        Self::renormalized(w, x, y, z)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Components in `[w, x, y, z]` order.
    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Hamilton product, renormalized.
    pub fn mul(&self, b: &Self) -> Self {
        let a = self;
        Self::renormalized(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    pub fn inverse(&self) -> Self {
        Self::canonical(self.w, -self.x, -self.y, -self.z)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let u = Vector3::new(self.x, self.y, self.z);
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let s = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        2.0 * s.atan2(self.w)
    }

    /// SO(3) logarithm as a rotation vector.
    pub fn log(&self) -> Result<Vector3<f64>, LieError> {
        let u = Vector3::new(self.x, self.y, self.z);
        let s = u.norm();
        let theta = 2.0 * s.atan2(self.w);
        if std::f64::consts::PI - theta < NEAR_PI_MARGIN {
            return Err(LieError::AngleNearPi { angle: theta });
        }
        if s < 1e-12 {
            return Ok(u * (2.0 / self.w));
        }
        Ok(u * (theta / s))
    }
}

/// Geodesic distance between two rotations, `acos((tr(Ra Rb^T) - 1) / 2)`.
///
/// Evaluated from the relative quaternion as `2 atan2(|vec|, |w|)`, which
/// equals the trace form but stays accurate near zero and never yields NaN.
pub fn geodesic_angle(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
    let rel = a.inverse().mul(b);
    let s = (rel.x * rel.x + rel.y * rel.y + rel.z * rel.z).sqrt();
    2.0 * s.atan2(rel.w.abs())
}

/// Skew-symmetric cross-product matrix.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// SE(3) element: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: UnitQuaternion,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: UnitQuaternion, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), t)
    }

    pub fn from_rotation(r: UnitQuaternion) -> Self {
        Self::new(r, Vector3::zeros())
    }

    /// `self * other`: maps points from `other`'s source frame through `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.mul(&other.rotation),
            translation: self.translation + self.rotation.rotate(&other.translation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let r = self.rotation.inverse();
        Pose {
            rotation: r,
            translation: -r.rotate(&self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation.to_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Pose {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        Pose {
            rotation: UnitQuaternion::from_matrix(&r),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    /// SE(3) logarithm (standard matrix logarithm of the homogeneous form).
    pub fn log(&self) -> Result<Twist, LieError> {
        log_se3(self)
    }

    pub fn exp(xi: &Twist) -> Pose {
        exp_se3(xi)
    }
}

/// Element of se(3): `v` is the translational part, `w` the rotational part.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub v: Vector3<f64>,
    pub w: Vector3<f64>,
}

impl Twist {
    pub fn new(v: Vector3<f64>, w: Vector3<f64>) -> Self {
        Self { v, w }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self {
            v: Vector3::new(x[0], x[1], x[2]),
            w: Vector3::new(x[3], x[4], x[5]),
        }
    }

    /// `(v, w)` stacked into a 6-vector.
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.v.x, self.v.y, self.v.z, self.w.x, self.w.y, self.w.z)
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }
}

/// Coefficients of the SO(3) left Jacobian: `J = I + b W + c W^2`.
fn so3_jacobian_coeffs(theta: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let half_sin = (0.5 * theta).sin();
        (
            2.0 * half_sin * half_sin / (theta * theta),
            (theta - theta.sin()) / (theta * theta * theta),
        )
    }
}

/// Coefficient `d` of the inverse SO(3) left Jacobian: `J^-1 = I - W/2 + d W^2`.
fn so3_jacobian_inv_coeff(theta: f64) -> f64 {
    if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half / half.tan()) / (theta * theta)
    }
}

/// SO(3) left Jacobian.
pub fn so3_left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let (b, c) = so3_jacobian_coeffs(omega.norm());
    let w = hat(omega);
    Matrix3::identity() + w * b + w * w * c
}

/// Inverse of the SO(3) left Jacobian.
pub fn so3_left_jacobian_inv(omega: &Vector3<f64>) -> Matrix3<f64> {
    let d = so3_jacobian_inv_coeff(omega.norm());
    let w = hat(omega);
    Matrix3::identity() - w * 0.5 + w * w * d
}

pub fn exp_se3(xi: &Twist) -> Pose {
    let rotation = UnitQuaternion::from_rotation_vector(&xi.w);
    Pose {
        rotation,
        translation: so3_left_jacobian(&xi.w) * xi.v,
    }
}

pub fn log_se3(p: &Pose) -> Result<Twist, LieError> {
    let w = p.rotation.log()?;
    Ok(Twist {
        v: so3_left_jacobian_inv(&w) * p.translation,
        w,
    })
}

/// The coupling block `Q(rho, phi)` of the SE(3) left Jacobian.
fn se3_q_block(rho: &Vector3<f64>, phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let (c1, c2, c3) = if theta < 1e-2 {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        (
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0,
            1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0,
            1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        (
            (theta - s) / (t2 * theta),
            (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2),
            (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta),
        )
    };
    let r = hat(rho);
    let p = hat(phi);
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    let pp = p * p;
    r * 0.5 + (pr + rp + prp) * c1 + (pp * r + rp * p - prp * 3.0) * c2 + (prp * p + pp * rp) * c3
}

/// Inverse of the SE(3) left Jacobian at `xi`.
pub fn se3_left_jacobian_inv(xi: &Twist) -> Matrix6<f64> {
    let jinv = so3_left_jacobian_inv(&xi.w);
    let q = se3_q_block(&xi.v, &xi.w);
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&jinv);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&jinv);
    m.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-(jinv * q * jinv)));
    m
}

/// Inverse of the SE(3) right Jacobian: `log(exp(xi) exp(d)) ~ xi + Jr^-1(xi) d`.
pub fn se3_right_jacobian_inv(xi: &Twist) -> Matrix6<f64> {
    se3_left_jacobian_inv(&Twist::new(-xi.v, -xi.w))
}
