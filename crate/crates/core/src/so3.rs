//! Rotation algebra on SO(3) and the tilt/yaw factorisation used by the
//! reduced-attitude error metrics.
//!
//! Every attitude is factored as `R = tilt * yaw`, where `yaw` is a rotation
//! about the z axis and `tilt` is the minimal rotation carrying `e3` onto the
//! body thrust axis `b3 = R e3`. With this ordering the tilt factor depends on
//! `b3` alone, so two attitudes that differ only by a rotation about their own
//! thrust axis share the same tilt.

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Threshold on `b3z + 1` below which the tilt factor is undefined.
pub const TILT_SINGULARITY_MARGIN: f64 = 1e-6;

/// Tolerance on `|M + M^T|_F` accepted by [`vee`].
pub const ANTISYMMETRY_TOLERANCE: f64 = 1e-6;

/// Result of [`decompose`]: `R = tilt * rotation_from_yaw(yaw)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltYaw<T: Real> {
    /// Yaw angle in `(-pi, pi]`.
    pub yaw: T,
    pub tilt: Rotation3<T>,
}

impl<T: Real> TiltYaw<T> {
    pub fn recompose(&self) -> Rotation3<T> {
        self.tilt * rotation_from_yaw(self.yaw)
    }
}

/// Hat map: `hat(a) * b == a x b`.
pub fn hat<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v.z, v.y, v.z, z, -v.x, -v.y, v.x, z)
}

/// Inverse of [`hat`]. Rejects matrices whose symmetric part exceeds
/// [`ANTISYMMETRY_TOLERANCE`].
pub fn vee<T: Real>(m: &Matrix3<T>) -> Result<Vector3<T>> {
    let asym = (m + m.transpose()).norm();
    if !(asym <= lit(ANTISYMMETRY_TOLERANCE)) {
        return Err(Error::NotAntisymmetric(to_f64(asym)));
    }
    Ok(vee_unchecked(m))
}

/// `vee` of the antisymmetric part, without validation.
pub(crate) fn vee_unchecked<T: Real>(m: &Matrix3<T>) -> Vector3<T> {
    let half: T = lit(0.5);
    Vector3::new((m[(2, 1)] - m[(1, 2)]) * half, (m[(0, 2)] - m[(2, 0)]) * half, (m[(1, 0)] - m[(0, 1)]) * half)
}

/// `½ (A - A^T)^∨`, the geometric attitude error between two rotations
/// when `A = R_aᵀ R_b`.
pub fn skew_error<T: Real>(a: &Rotation3<T>, b: &Rotation3<T>) -> Vector3<T> {
    // vee_unchecked already takes the antisymmetric half.
    vee_unchecked(&(a.matrix().transpose() * b.matrix()))
}

/// Rotation about the inertial z axis by `yaw` radians.
pub fn rotation_from_yaw<T: Real>(yaw: T) -> Rotation3<T> {
    let (s, c) = yaw.sin_cos();
    let z = T::zero();
    let o = T::one();
    Rotation3::from_matrix_unchecked(Matrix3::new(c, -s, z, s, c, z, z, z, o))
}

/// Unit thrust axis `R e3` (third column of `R`).
pub fn thrust_axis<T: Real>(r: &Rotation3<T>) -> Vector3<T> {
    r.matrix().column(2).into_owned()
}

/// Minimal rotation taking `e3` to the unit vector `b3`.
///
/// Fails with [`Error::TiltSingularity`] when `b3` points (nearly) straight
/// down, where the construction divides by `1 + b3z`.
pub fn tilt_from_axis<T: Real>(b3: &Vector3<T>) -> Result<Rotation3<T>> {
    let (x, y, z) = (b3.x, b3.y, b3.z);
    if !(z > lit::<T>(-1.0 + TILT_SINGULARITY_MARGIN)) {
        return Err(Error::TiltSingularity(to_f64(z)));
    }
    let o = T::one();
    let k = o / (o + z);
    Ok(Rotation3::from_matrix_unchecked(Matrix3::new(
        o - x * x * k,
        -x * y * k,
        x,
        -x * y * k,
        o - y * y * k,
        y,
        -x,
        -y,
        z,
    )))
}

/// Splits `r` into its tilt and yaw factors, `r = tilt * R_z(yaw)`.
pub fn decompose<T: Real>(r: &Rotation3<T>) -> Result<TiltYaw<T>> {
    let tilt = tilt_from_axis(&thrust_axis(r))?;
    let yaw_block = tilt.matrix().transpose() * r.matrix();
    let mut yaw = yaw_block[(1, 0)].atan2(yaw_block[(0, 0)]);
    if yaw <= -T::pi() {
        yaw = T::pi();
    }
    Ok(TiltYaw { yaw, tilt })
}

/// Frobenius distance of `m` from orthogonality plus `|det m - 1|`.
pub fn rotation_defect<T: Real>(m: &Matrix3<T>) -> T {
    (m.transpose() * m - Matrix3::identity()).norm() + (m.determinant() - T::one()).abs()
}

/// Projects a nearly orthogonal matrix back onto SO(3) by Newton iteration
/// on the polar factor.
pub fn orthonormalize<T: Real>(m: &Matrix3<T>) -> Matrix3<T> {
    let mut x = *m;
    let half: T = lit(0.5);
    let three: T = lit(3.0);
    for _ in 0..4 {
        let xtx = x.transpose() * x;
        if (xtx - Matrix3::identity()).norm() < lit(1e-15) {
            break;
        }
        x = x * (Matrix3::identity() * three - xtx) * half;
    }
    x
}

/// Angle between the thrust axis of `r` and the inertial vertical, radians.
pub fn tilt_angle<T: Real>(r: &Rotation3<T>) -> T {
    let z = thrust_axis(r).z;
    z.clamp(-T::one(), T::one()).acos()
}
