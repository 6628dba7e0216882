//! Small 3-D algebra layer shared by the rest of the crate.
//!
//! Vectors and matrices are plain `nalgebra` types; [`Rotation`] wraps a
//! matrix and keeps it on SO(3).

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// World z axis.
pub fn z_world() -> Vec3 {
    Vec3::new(0.0, 0.0, 1.0)
}

/// Drift (Frobenius norm of `RᵀR − I`) above which [`Rotation::new`]
/// re-orthonormalizes its input.
pub const ORTHO_DRIFT_TOL: f64 = 1e-9;

/// Skew-symmetric matrix with `hat(w) * b == w × b`.
pub fn hat(w: &Vec3) -> Mat3 {
    Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`hat`]; reads the skew part of `m`.
pub fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Orientation of the body frame in world coordinates, columns are the
/// body axes `[x_B y_B z_B]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Wraps `m`, running Gram-Schmidt on its columns when it has drifted
    /// off SO(3) by more than [`ORTHO_DRIFT_TOL`].
    pub fn new(m: Mat3) -> Self {
        if orthonormality_error(&m) > ORTHO_DRIFT_TOL {
            Rotation(gram_schmidt(&m))
        } else {
            Rotation(m)
        }
    }

    /// Builds a rotation from three body axes expressed in world
    /// coordinates.
    pub fn from_axes(x: Vec3, y: Vec3, z: Vec3) -> Self {
        Self::new(Mat3::from_columns(&[x, y, z]))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn x_axis(&self) -> Vec3 {
        self.0.column(0).into_owned()
    }

    pub fn y_axis(&self) -> Vec3 {
        self.0.column(1).into_owned()
    }

    pub fn z_axis(&self) -> Vec3 {
        self.0.column(2).into_owned()
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation::new(self.0 * other.0)
    }

    /// Rotates a body-frame vector into world coordinates.
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Expresses a world-frame vector in body coordinates.
    pub fn apply_inverse(&self, v: &Vec3) -> Vec3 {
        self.0.transpose() * v
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.0)
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        self.compose(&rhs)
    }
}

fn orthonormality_error(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).norm()
}

fn gram_schmidt(m: &Mat3) -> Mat3 {
    let x = m.column(0).normalize();
    let y_raw = m.column(1) - x * x.dot(&m.column(1));
    let y = y_raw.normalize();
    let z = x.cross(&y);
    Mat3::from_columns(&[x, y, z])
}

/// Exponential map so(3) → SO(3) (Rodrigues' formula).
pub fn rot_exp(phi: &Vec3) -> Rotation {
    let theta = phi.norm();
    let k = hat(phi);
    let k2 = k * k;
    // sin(θ)/θ and (1 − cos θ)/θ², two-term series near zero
    let (a, b) = if theta < 1e-8 {
        (1.0 - theta * theta / 6.0, 0.5 - theta * theta / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    Rotation::new(Mat3::identity() + k * a + k2 * b)
}

/// Symmetric difference quotient of a vector-valued function.
pub fn central_diff<F>(f: F, t: f64, h: f64) -> Vec3
where
    F: Fn(f64) -> Vec3,
{
    (f(t + h) - f(t - h)) / (2.0 * h)
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.sin().atan2(a.cos());
    if w <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}
