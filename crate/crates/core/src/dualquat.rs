//! Quaternion and dual quaternion algebra.
//!
//! A unit dual quaternion `q = r + eps d` encodes the rigid motion
//! `p -> R p + t` with `r` the rotation quaternion and `d = t r / 2`
//! (`t` as a pure quaternion). Products compose right to left:
//! `(a * b)(p) = a(b(p))`.
//!
//! Two representations implement [`RigidDq`]:
//!
//! * [`DualQuat`] stores all eight components and handles any 3D motion.
//! * [`PlanarDualQuat`] stores only the four components that can be non-zero
//!   for a motion in the `z = 0` plane (`r.w`, `r.z`, `d.x`, `d.y`).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::types::{check_rotation, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DqError {
    #[error("not a proper rotation: {0}")]
    NotARotation(String),
    #[error("motion is not confined to the z = 0 plane")]
    NotPlanar,
    #[error("dual quaternion has a zero real part")]
    ZeroRealPart,
    #[error("blend weights must be non-negative and finite")]
    InvalidWeight,
    #[error("all blend weights are zero")]
    ZeroWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const ZERO: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn pure(v: &Vector3<f64>) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(&self, o: &Self) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit quaternion of a rotation matrix, with `w >= 0`.
    pub fn from_rotation(m: &Matrix3<f64>) -> Self {
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Self::new(
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            Self::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            Self::new(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            Self::new(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            )
        };
        let q = q * (1.0 / q.norm());
        if q.w < 0.0 {
            -q
        } else {
            q
        }
    }

    /// Rotation matrix of a unit quaternion.
    pub fn to_rotation(&self) -> Matrix3<f64> {
        let Quaternion { w, x, y, z } = *self;
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

    /// Rotate `v` by this unit quaternion.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let u = self.vector();
        let uv = u.cross(v);
        v + (uv * self.w + u.cross(&uv)) * 2.0
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, b: Quaternion) -> Quaternion {
        let a = self;
        Quaternion::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

impl Mul<f64> for Quaternion {
    type Output = Quaternion;

    fn mul(self, s: f64) -> Quaternion {
        Quaternion::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }
}

impl Add for Quaternion {
    type Output = Quaternion;

    fn add(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;

    fn sub(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Quaternion {
        self * -1.0
    }
}

/// Operations shared by the planar and spatial dual quaternion encodings.
///
/// `zero` and `add_scaled` work on raw, non-unit values and exist only to
/// accumulate weighted sums for [`blend`].
pub trait RigidDq: Copy + fmt::Debug + PartialEq + Send + Sync + 'static {
    fn identity() -> Self;

    /// Encode `p -> R p + t`. The rotation must be orthonormal with
    /// determinant +1.
    fn from_transform(rotation: &Matrix3<f64>, translation: &Vector3<f64>)
        -> Result<Self, DqError>;

    /// Pure translation.
    fn from_translation(t: &Vector3<f64>) -> Self;

    fn to_transform(&self) -> (Matrix3<f64>, Vector3<f64>);

    /// `mu * (R p + t)`.
    fn apply(&self, mu: f64, p: &Point) -> Point;

    /// Composition `self * rhs`, renormalized.
    fn multiply(&self, rhs: &Self) -> Self;

    /// Divide by the dual-number norm.
    fn normalize(&self) -> Result<Self, DqError>;

    /// Dot product of the real parts.
    fn real_dot(&self, other: &Self) -> f64;

    fn zero() -> Self;

    fn add_scaled(&mut self, w: f64, other: &Self);

    fn to_spatial(&self) -> DualQuat;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualQuat {
    pub real: Quaternion,
    pub dual: Quaternion,
}

impl DualQuat {
    pub const fn new(real: Quaternion, dual: Quaternion) -> Self {
        Self { real, dual }
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.real.conjugate(), self.dual.conjugate())
    }

    pub fn components(&self) -> [f64; 8] {
        let (r, d) = (self.real, self.dual);
        [r.w, r.x, r.y, r.z, d.w, d.x, d.y, d.z]
    }

    pub fn translation(&self) -> Vector3<f64> {
        (self.dual * self.real.conjugate()).vector() * 2.0
    }

    fn raw_mul(&self, b: &Self) -> Self {
        Self::new(
            self.real * b.real,
            self.real * b.dual + self.dual * b.real,
        )
    }
}

impl Neg for DualQuat {
    type Output = DualQuat;

    fn neg(self) -> DualQuat {
        DualQuat::new(-self.real, -self.dual)
    }
}

impl RigidDq for DualQuat {
    fn identity() -> Self {
        Self::new(Quaternion::IDENTITY, Quaternion::ZERO)
    }

    fn from_transform(
        rotation: &Matrix3<f64>,
        translation: &Vector3<f64>,
    ) -> Result<Self, DqError> {
        check_rotation(rotation).map_err(|e| DqError::NotARotation(e.to_string()))?;
        let real = Quaternion::from_rotation(rotation);
        let dual = Quaternion::pure(translation) * real * 0.5;
        Ok(Self::new(real, dual))
    }

    fn from_translation(t: &Vector3<f64>) -> Self {
        Self::new(Quaternion::IDENTITY, Quaternion::pure(t) * 0.5)
    }

    fn to_transform(&self) -> (Matrix3<f64>, Vector3<f64>) {
        (self.real.to_rotation(), self.translation())
    }

    fn apply(&self, mu: f64, p: &Point) -> Point {
        (self.real.rotate(p) + self.translation()) * mu
    }

    fn multiply(&self, rhs: &Self) -> Self {
        let raw = self.raw_mul(rhs);
        raw.normalize().unwrap_or(raw)
    }

    fn normalize(&self) -> Result<Self, DqError> {
        let n2 = self.real.norm_squared();
        if !(n2 > 0.0 && n2.is_finite()) {
            return Err(DqError::ZeroRealPart);
        }
        let n = n2.sqrt();
        let real = self.real * (1.0 / n);
        let dual = self.dual * (1.0 / n);
        // Remove the component of the dual part along the real part.
        let dual = dual - real * real.dot(&dual);
        Ok(Self::new(real, dual))
    }

    fn real_dot(&self, other: &Self) -> f64 {
        self.real.dot(&other.real)
    }

    fn zero() -> Self {
        Self::new(Quaternion::ZERO, Quaternion::ZERO)
    }

    fn add_scaled(&mut self, w: f64, other: &Self) {
        self.real = self.real + other.real * w;
        self.dual = self.dual + other.dual * w;
    }

    fn to_spatial(&self) -> DualQuat {
        *self
    }
}

/// Planar dual quaternion: `real = (rw, 0, 0, rz)`, `dual = (0, dx, dy, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarDualQuat {
    pub rw: f64,
    pub rz: f64,
    pub dx: f64,
    pub dy: f64,
}

impl PlanarDualQuat {
    pub const fn new(rw: f64, rz: f64, dx: f64, dy: f64) -> Self {
        Self { rw, rz, dx, dy }
    }

    /// `(cos theta, sin theta)` of the encoded rotation.
    fn cos_sin(&self) -> (f64, f64) {
        (
            self.rw * self.rw - self.rz * self.rz,
            2.0 * self.rw * self.rz,
        )
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(
            2.0 * (self.dx * self.rw - self.dy * self.rz),
            2.0 * (self.dx * self.rz + self.dy * self.rw),
            0.0,
        )
    }

    pub fn angle(&self) -> f64 {
        2.0 * self.rz.atan2(self.rw)
    }
}

impl Neg for PlanarDualQuat {
    type Output = PlanarDualQuat;

    fn neg(self) -> PlanarDualQuat {
        PlanarDualQuat::new(-self.rw, -self.rz, -self.dx, -self.dy)
    }
}

impl RigidDq for PlanarDualQuat {
    fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    fn from_transform(
        rotation: &Matrix3<f64>,
        translation: &Vector3<f64>,
    ) -> Result<Self, DqError> {
        check_rotation(rotation).map_err(|e| DqError::NotARotation(e.to_string()))?;
        let off_plane = rotation[(0, 2)].abs()
            + rotation[(1, 2)].abs()
            + rotation[(2, 0)].abs()
            + rotation[(2, 1)].abs()
            + translation.z.abs();
        if off_plane > crate::types::ROTATION_TOL {
            return Err(DqError::NotPlanar);
        }
        let half = 0.5 * rotation[(1, 0)].atan2(rotation[(0, 0)]);
        let (rz, rw) = half.sin_cos();
        let (tx, ty) = (translation.x, translation.y);
        Ok(Self::new(
            rw,
            rz,
            0.5 * (tx * rw + ty * rz),
            0.5 * (ty * rw - tx * rz),
        ))
    }

    fn from_translation(t: &Vector3<f64>) -> Self {
        debug_assert!(t.z == 0.0, "planar translation with non-zero z");
        Self::new(1.0, 0.0, 0.5 * t.x, 0.5 * t.y)
    }

    fn to_transform(&self) -> (Matrix3<f64>, Vector3<f64>) {
        let (c, s) = self.cos_sin();
        (
            Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            self.translation(),
        )
    }

    fn apply(&self, mu: f64, p: &Point) -> Point {
        let (c, s) = self.cos_sin();
        let t = self.translation();
        Point::new(
            mu * (c * p.x - s * p.y + t.x),
            mu * (s * p.x + c * p.y + t.y),
            mu * p.z,
        )
    }

    fn multiply(&self, b: &Self) -> Self {
        let a = self;
        let raw = Self::new(
            a.rw * b.rw - a.rz * b.rz,
            a.rw * b.rz + a.rz * b.rw,
            a.rw * b.dx - a.rz * b.dy + a.dx * b.rw + a.dy * b.rz,
            a.rw * b.dy + a.rz * b.dx - a.dx * b.rz + a.dy * b.rw,
        );
        raw.normalize().unwrap_or(raw)
    }

    fn normalize(&self) -> Result<Self, DqError> {
        let n2 = self.rw * self.rw + self.rz * self.rz;
        if !(n2 > 0.0 && n2.is_finite()) {
            return Err(DqError::ZeroRealPart);
        }
        // Real and dual parts occupy disjoint components, so the dual part
        // is always orthogonal to the real part.
        let inv = 1.0 / n2.sqrt();
        Ok(Self::new(
            self.rw * inv,
            self.rz * inv,
            self.dx * inv,
            self.dy * inv,
        ))
    }

    fn real_dot(&self, other: &Self) -> f64 {
        self.rw * other.rw + self.rz * other.rz
    }

    fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0)
    }

    fn add_scaled(&mut self, w: f64, other: &Self) {
        self.rw += w * other.rw;
        self.rz += w * other.rz;
        self.dx += w * other.dx;
        self.dy += w * other.dy;
    }

    fn to_spatial(&self) -> DualQuat {
        DualQuat::new(
            Quaternion::new(self.rw, 0.0, 0.0, self.rz),
            Quaternion::new(0.0, self.dx, self.dy, 0.0),
        )
    }
}

/// Weighted linear blend of unit dual quaternions.
///
/// Every input is first flipped into the hemisphere of the input with the
/// largest weight, then the weighted sum is normalized. Weights need not sum
/// to one.
pub fn blend_iter<'a, Q, I>(pairs: I) -> Result<Q, DqError>
where
    Q: RigidDq,
    I: Iterator<Item = (f64, &'a Q)> + Clone,
{
    let mut reference: Option<(f64, &Q)> = None;
    for (w, q) in pairs.clone() {
        if !(w.is_finite() && w >= 0.0) {
            return Err(DqError::InvalidWeight);
        }
        if w > 0.0 && reference.is_none_or(|(best, _)| w > best) {
            reference = Some((w, q));
        }
    }
    let (_, reference) = reference.ok_or(DqError::ZeroWeights)?;
    let mut acc = Q::zero();
    for (w, q) in pairs {
        if w == 0.0 {
            continue;
        }
        let sign = if q.real_dot(reference) < 0.0 { -w } else { w };
        acc.add_scaled(sign, q);
    }
    acc.normalize()
}

pub fn blend<Q: RigidDq>(pairs: &[(f64, Q)]) -> Result<Q, DqError> {
    blend_iter(pairs.iter().map(|(w, q)| (*w, q)))
}
