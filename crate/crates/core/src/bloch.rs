//! Geometry on the Bloch sphere: 3-vectors, unit vectors, uniform sphere
//! sampling and the step function used to turn signs into bits.

use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Tolerance on `|v|² - 1` accepted when constructing a [`UnitVec3`].
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// A real 3-vector. Holds Bloch vectors of POVM elements, whose length is the
/// outcome weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Direction of `self`, or `None` for the zero vector and non-finite input.
    pub fn normalized(self) -> Option<UnitVec3> {
        let n = self.norm();
        if n <= 0.0 || !n.is_finite() {
            return None;
        }
        UnitVec3::new(self.x / n, self.y / n, self.z / n)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl std::iter::Sum for Vec3 {
    fn sum<I: Iterator<Item = Vec3>>(iter: I) -> Vec3 {
        iter.fold(Vec3::ZERO, Add::add)
    }
}

/// A point on the unit sphere S².
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(into = "Vec3")]
pub struct UnitVec3(Vec3);

impl UnitVec3 {
    pub const X: UnitVec3 = UnitVec3(Vec3::new(1.0, 0.0, 0.0));
    pub const Y: UnitVec3 = UnitVec3(Vec3::new(0.0, 1.0, 0.0));
    pub const Z: UnitVec3 = UnitVec3(Vec3::new(0.0, 0.0, 1.0));

    /// Accepts `(x, y, z)` only if its squared norm is within
    /// [`UNIT_TOLERANCE`] of one.
    pub fn new(x: f64, y: f64, z: f64) -> Option<Self> {
        let v = Vec3::new(x, y, z);
        (v.is_finite() && (v.norm_squared() - 1.0).abs() <= UNIT_TOLERANCE).then_some(UnitVec3(v))
    }

    pub fn as_vec(self) -> Vec3 {
        self.0
    }

    pub fn dot(self, other: UnitVec3) -> f64 {
        self.0.dot(other.0)
    }

    /// Angle in `[0, π]` between two directions.
    pub fn angle_to(self, other: UnitVec3) -> f64 {
        self.0.cross(other.0).norm().atan2(self.0.dot(other.0))
    }
}

impl Neg for UnitVec3 {
    type Output = UnitVec3;
    fn neg(self) -> UnitVec3 {
        UnitVec3(-self.0)
    }
}

impl From<UnitVec3> for Vec3 {
    fn from(u: UnitVec3) -> Vec3 {
        u.0
    }
}

/// Heaviside step as a bit: `true` (1) iff `x >= 0`.
///
/// With this tie-break `(-1)^theta(-x) == sgn(x)` for every `x != 0`.
#[inline]
pub fn theta(x: f64) -> bool {
    x >= 0.0
}

#[inline]
pub fn dot(u: Vec3, v: Vec3) -> f64 {
    u.dot(v)
}

/// `(-1)^bit` as a float.
#[inline]
pub fn sign_of_bit(bit: bool) -> f64 {
    if bit {
        -1.0
    } else {
        1.0
    }
}

/// Uniform direction on S², drawn by normalizing three independent standard
/// normal deviates. The zero vector is redrawn.
pub fn sample_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> UnitVec3 {
    loop {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n2 = v.norm_squared();
        if n2 > 1e-300 {
            let n = n2.sqrt();
            return UnitVec3(Vec3::new(v.x / n, v.y / n, v.z / n));
        }
    }
}

/// `(-1)^c v1 + (-1)^d v2`, the vector Bob tests his outcome against.
#[inline]
pub fn signed_combination(c: bool, d: bool, v1: UnitVec3, v2: UnitVec3) -> Vec3 {
    v1.as_vec() * sign_of_bit(c) + v2.as_vec() * sign_of_bit(d)
}

/// A proper rotation of ℝ³ stored as a row-major orthogonal matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    m: [[f64; 3]; 3],
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Rodrigues rotation by `angle` radians about `axis`.
    pub fn about_axis(axis: UnitVec3, angle: f64) -> Self {
        let Vec3 { x, y, z } = axis.as_vec();
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Rotation {
            m: [
                [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
                [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
                [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
            ],
        }
    }

    /// Uniformly random axis, uniformly random angle.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let axis = sample_unit_vector(rng);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        Rotation::about_axis(axis, angle)
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// Rotates a unit vector, renormalizing away rounding drift.
    pub fn apply_unit(&self, u: UnitVec3) -> UnitVec3 {
        let v = self.apply(u.as_vec());
        let n = v.norm();
        UnitVec3(Vec3::new(v.x / n, v.y / n, v.z / n))
    }
}
