//! Quaternion and small vector/matrix algebra.
//!
//! Quaternions are scalar-first and use the Hamilton product. A unit
//! quaternion `q` maps body-frame coordinates to reference-frame coordinates
//! through `v_r = q ⊗ (0, v_b) ⊗ q*`.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this rate norm (rad/s) an angular-velocity increment is the identity.
pub const SMALL_RATE: f64 = 1e-12;

/// Tolerance used when checking that a matrix is a proper rotation.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn try_normalize(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self / n)
    }

    /// Angle between two non-zero vectors, in `[0, π]`.
    pub fn angle_to(self, o: Vec3) -> f64 {
        self.cross(o).norm().atan2(self.dot(o))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::from_array(a)
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3 {
    pub rows: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };
    pub const ZERO: Mat3 = Mat3 { rows: [[0.0; 3]; 3] };

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Self {
        Mat3 { rows }
    }

    pub fn from_columns(c0: Vec3, c1: Vec3, c2: Vec3) -> Self {
        Mat3::from_rows([[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]])
    }

    pub fn scaled_identity(s: f64) -> Self {
        Mat3::IDENTITY * s
    }

    pub fn column(&self, j: usize) -> Vec3 {
        Vec3::new(self.rows[0][j], self.rows[1][j], self.rows[2][j])
    }

    pub fn transpose(&self) -> Mat3 {
        let r = &self.rows;
        Mat3::from_rows([
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ])
    }

    pub fn determinant(&self) -> f64 {
        let r = &self.rows;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }

    /// Largest absolute entry of `MᵀM − I`.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose() * *self;
        let mut worst = 0.0_f64;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p.rows[i][j] - target).abs());
            }
        }
        worst
    }

    pub fn is_rotation(&self, tol: f64) -> bool {
        self.orthonormality_error() <= tol && (self.determinant() - 1.0).abs() <= tol
    }

    pub fn max_abs_diff(&self, o: &Mat3) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((self.rows[i][j] - o.rows[i][j]).abs());
            }
        }
        worst
    }
}

impl Mul<Vec3> for Mat3 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        let r = &self.rows;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, o: Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.rows[i][k] * o.rows[k][j]).sum();
            }
        }
        Mat3::from_rows(out)
    }
}

impl Mul<f64> for Mat3 {
    type Output = Mat3;
    fn mul(self, s: f64) -> Mat3 {
        let mut out = self.rows;
        out.iter_mut().flatten().for_each(|c| *c *= s);
        Mat3::from_rows(out)
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, o: Mat3) -> Mat3 {
        let mut out = self.rows;
        for (i, row) in out.iter_mut().enumerate() {
            for (j, c) in row.iter_mut().enumerate() {
                *c += o.rows[i][j];
            }
        }
        Mat3::from_rows(out)
    }
}

/// Skew-symmetric matrix `[v×]` with `[v×] w = v × w`.
pub fn cross_matrix(v: Vec3) -> Mat3 {
    Mat3::from_rows([[0.0, -v.z, v.y], [v.z, 0.0, -v.x], [-v.y, v.x, 0.0]])
}

/// Unit quaternion `(w, x, y, z)`, scalar first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        UnitQuaternion::IDENTITY
    }
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes `(w, x, y, z)`; `None` if the norm is zero or not finite.
    pub fn try_new(w: f64, x: f64, y: f64, z: f64) -> Option<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        (n > 0.0 && n.is_finite()).then(|| UnitQuaternion {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Like [`try_new`](Self::try_new) but panics on a zero quaternion.
    pub fn new_normalize(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self::try_new(w, x, y, z).expect("cannot normalize a zero quaternion")
    }

    pub fn from_array(a: [f64; 4]) -> Option<Self> {
        Self::try_new(a[0], a[1], a[2], a[3])
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation by `angle` radians about `axis` (any non-zero length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        match axis.try_normalize() {
            Some(n) => {
                let (s, c) = (0.5 * angle).sin_cos();
                UnitQuaternion::new_normalize(c, n.x * s, n.y * s, n.z * s)
            }
            None => UnitQuaternion::IDENTITY,
        }
    }

    /// Exponential map of a rotation vector (axis × angle).
    pub fn from_rotation_vector(rv: Vec3) -> Self {
        let angle = rv.norm();
        if angle < 1e-12 {
            return UnitQuaternion::new_normalize(1.0, 0.5 * rv.x, 0.5 * rv.y, 0.5 * rv.z);
        }
        UnitQuaternion::from_axis_angle(rv, angle)
    }

    /// Increment for a body rate `omega` held for `ts` seconds: angle `‖ω‖·ts` about `ω̂`.
    pub fn from_angular_velocity(omega: Vec3, ts: f64) -> Self {
        let rate = omega.norm();
        if rate < SMALL_RATE {
            return UnitQuaternion::IDENTITY;
        }
        UnitQuaternion::from_axis_angle(omega / rate, rate * ts)
    }

    /// Logarithm: the shortest rotation vector representing this rotation.
    pub fn to_rotation_vector(&self) -> Vec3 {
        let (w, v) = if self.w < 0.0 {
            (-self.w, -self.vector())
        } else {
            (self.w, self.vector())
        };
        let s = v.norm();
        if s < 1e-12 {
            return v * (2.0 / w);
        }
        v * (2.0 * s.atan2(w) / s)
    }

    pub fn conjugate(&self) -> Self {
        UnitQuaternion {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Same rotation, opposite sign.
    pub fn negated(&self) -> Self {
        UnitQuaternion {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Four-component inner product.
    pub fn dot(&self, o: &UnitQuaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Sign representative closest to `reference`.
    pub fn aligned_with(&self, reference: &UnitQuaternion) -> Self {
        if self.dot(reference) < 0.0 {
            self.negated()
        } else {
            *self
        }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        // v + 2w (u × v) + 2 u × (u × v), equal to q ⊗ (0, v) ⊗ q*
        let u = self.vector();
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    pub fn to_matrix(&self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Mat3::from_rows([
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ])
    }

    /// Inverse of [`to_matrix`](Self::to_matrix); rejects non-rotations.
    pub fn from_matrix(m: &Mat3) -> Result<Self> {
        let ortho = m.orthonormality_error();
        let det = m.determinant();
        if !(ortho <= ROTATION_TOL && (det - 1.0).abs() <= ROTATION_TOL) {
            return Err(Error::NotARotation { ortho, det });
        }
        Ok(Self::from_rotation_matrix_unchecked(m))
    }

    /// Shepperd's method without validating the input.
    pub(crate) fn from_rotation_matrix_unchecked(m: &Mat3) -> Self {
        let r = &m.rows;
        let trace = r[0][0] + r[1][1] + r[2][2];
        let (w, x, y, z) = if trace > r[0][0].max(r[1][1]).max(r[2][2]) {
            let s = 2.0 * (1.0 + trace).sqrt();
            (
                0.25 * s,
                (r[2][1] - r[1][2]) / s,
                (r[0][2] - r[2][0]) / s,
                (r[1][0] - r[0][1]) / s,
            )
        } else if r[0][0] >= r[1][1] && r[0][0] >= r[2][2] {
            let s = 2.0 * (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt();
            (
                (r[2][1] - r[1][2]) / s,
                0.25 * s,
                (r[0][1] + r[1][0]) / s,
                (r[0][2] + r[2][0]) / s,
            )
        } else if r[1][1] >= r[2][2] {
            let s = 2.0 * (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt();
            (
                (r[0][2] - r[2][0]) / s,
                (r[0][1] + r[1][0]) / s,
                0.25 * s,
                (r[1][2] + r[2][1]) / s,
            )
        } else {
            let s = 2.0 * (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt();
            (
                (r[1][0] - r[0][1]) / s,
                (r[0][2] + r[2][0]) / s,
                (r[1][2] + r[2][1]) / s,
                0.25 * s,
            )
        };
        UnitQuaternion::new_normalize(w, x, y, z)
    }

    /// Smallest rotation angle between the two orientations, in `[0, π]`.
    ///
    /// Equal to `2·acos(min(1, |⟨a, b⟩|))`, evaluated through `atan2` so that
    /// nearly identical orientations keep full precision.
    pub fn angular_distance(&self, o: &UnitQuaternion) -> f64 {
        let d = self.conjugate() * *o;
        2.0 * d.vector().norm().atan2(d.w.abs())
    }

    /// `self* ⊗ o`, so that `self ⊗ result = o`.
    pub fn relative_to(&self, o: &UnitQuaternion) -> UnitQuaternion {
        self.conjugate() * *o
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = String;

    fn try_from(a: [f64; 4]) -> std::result::Result<Self, String> {
        UnitQuaternion::from_array(a).ok_or_else(|| format!("cannot normalize quaternion {a:?}"))
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.to_array()
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    /// Hamilton product, renormalized.
    fn mul(self, b: UnitQuaternion) -> UnitQuaternion {
        let a = self;
        UnitQuaternion::new_normalize(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

pub fn quat_multiply(a: UnitQuaternion, b: UnitQuaternion) -> UnitQuaternion {
    a * b
}

pub fn quat_conjugate(q: UnitQuaternion) -> UnitQuaternion {
    q.conjugate()
}

pub fn quat_rotate(q: UnitQuaternion, v: Vec3) -> Vec3 {
    q.rotate(v)
}

pub fn quat_from_angvel(omega: Vec3, ts: f64) -> UnitQuaternion {
    UnitQuaternion::from_angular_velocity(omega, ts)
}

pub fn quat_to_matrix(q: UnitQuaternion) -> Mat3 {
    q.to_matrix()
}

pub fn matrix_to_quat(m: &Mat3) -> Result<UnitQuaternion> {
    UnitQuaternion::from_matrix(m)
}

pub fn angular_distance(a: UnitQuaternion, b: UnitQuaternion) -> f64 {
    a.angular_distance(&b)
}

pub fn relative_quat(a: UnitQuaternion, b: UnitQuaternion) -> UnitQuaternion {
    a.relative_to(&b)
}
