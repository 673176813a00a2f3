//! Small fixed-size vector algebra, generic over [`Real`] so the same code
//! runs plain or recorded.

use std::ops::{Add, Mul, Neg, Sub};

use crate::diff::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct V3<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S> V3<S> {
    pub const fn new(x: S, y: S, z: S) -> Self {
        V3 { x, y, z }
    }
}

impl V3<f64> {
    pub fn from_array(a: [f64; 3]) -> Self {
        V3::new(a[0], a[1], a[2])
    }

    pub fn from_slice(a: &[f64]) -> Self {
        V3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn zero() -> Self {
        V3::new(0.0, 0.0, 0.0)
    }

    pub fn lift<S: Real>(self, anchor: S) -> V3<S> {
        V3::new(anchor.lift(self.x), anchor.lift(self.y), anchor.lift(self.z))
    }
}

impl<S: Real> V3<S> {
    pub fn value(&self) -> V3<f64> {
        V3::new(self.x.value(), self.y.value(), self.z.value())
    }

    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn dot_f(self, o: V3<f64>) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        V3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm_sq(self) -> S {
        self.dot(self)
    }

    pub fn norm(self) -> S {
        self.norm_sq().sqrt()
    }

    pub fn normalize(self) -> Self {
        let inv = self.norm();
        V3::new(self.x / inv, self.y / inv, self.z / inv)
    }

    pub fn scale(self, k: S) -> Self {
        V3::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn scale_f(self, k: f64) -> Self {
        V3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl<S: Real> Add for V3<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        V3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<S: Real> Sub for V3<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        V3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<S: Real> Neg for V3<S> {
    type Output = Self;
    fn neg(self) -> Self {
        V3::new(-self.x, -self.y, -self.z)
    }
}

impl<S: Real> Mul<S> for V3<S> {
    type Output = Self;
    fn mul(self, k: S) -> Self {
        self.scale(k)
    }
}

/// Row-major 3×3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct M3<S> {
    pub rows: [V3<S>; 3],
}

impl<S: Real> M3<S> {
    pub fn mul_vec(&self, v: V3<S>) -> V3<S> {
        V3::new(self.rows[0].dot(v), self.rows[1].dot(v), self.rows[2].dot(v))
    }

    /// `selfᵀ · v`
    pub fn tmul_vec(&self, v: V3<S>) -> V3<S> {
        let [a, b, c] = self.rows;
        V3::new(a.x * v.x + b.x * v.y + c.x * v.z, a.y * v.x + b.y * v.y + c.y * v.z, a.z * v.x + b.z * v.y + c.z * v.z)
    }

    pub fn value(&self) -> M3<f64> {
        M3 { rows: [self.rows[0].value(), self.rows[1].value(), self.rows[2].value()] }
    }

    pub fn col(&self, j: usize) -> V3<S> {
        let pick = |r: &V3<S>| match j {
            0 => r.x,
            1 => r.y,
            _ => r.z,
        };
        V3::new(pick(&self.rows[0]), pick(&self.rows[1]), pick(&self.rows[2]))
    }
}

impl M3<f64> {
    pub fn identity() -> Self {
        M3 { rows: [V3::new(1.0, 0.0, 0.0), V3::new(0.0, 1.0, 0.0), V3::new(0.0, 0.0, 1.0)] }
    }

    pub fn from_cols(c0: V3<f64>, c1: V3<f64>, c2: V3<f64>) -> Self {
        M3 { rows: [V3::new(c0.x, c1.x, c2.x), V3::new(c0.y, c1.y, c2.y), V3::new(c0.z, c1.z, c2.z)] }
    }

    pub fn det(&self) -> f64 {
        self.rows[0].dot(self.rows[1].cross(self.rows[2]))
    }

    pub fn transpose(&self) -> Self {
        M3::from_cols(self.rows[0], self.rows[1], self.rows[2])
    }

    pub fn mul_mat(&self, o: &M3<f64>) -> M3<f64> {
        let ot = o.transpose();
        let row = |r: V3<f64>| V3::new(r.dot(ot.rows[0]), r.dot(ot.rows[1]), r.dot(ot.rows[2]));
        M3 { rows: [row(self.rows[0]), row(self.rows[1]), row(self.rows[2])] }
    }
}

/// Rotation matrix from an axis-angle vector (exponential map).
///
/// Written in terms of θ² so it stays smooth through the identity.
pub fn axis_angle_to_matrix<S: Real>(r: V3<S>) -> M3<S> {
    let t2 = r.norm_sq();
    let t2v = t2.value();
    let (a, b) = if t2v < 1e-10 {
        (-(t2 / 6.0) + 1.0, -(t2 / 24.0) + 0.5)
    } else {
        let t = t2.sqrt();
        (t.sin() / t, (-(t.cos()) + 1.0) / t2)
    };
    let (x, y, z) = (r.x, r.y, r.z);
    let one = x.lift(1.0);
    // R = I + a K + b K²,  K = [r]×
    let xx = x * x;
    let yy = y * y;
    let zz = z * z;
    let xy = x * y;
    let xz = x * z;
    let yz = y * z;
    M3 {
        rows: [
            V3::new(one - b * (yy + zz), b * xy - a * z, b * xz + a * y),
            V3::new(b * xy + a * z, one - b * (xx + zz), b * yz - a * x),
            V3::new(b * xz - a * y, b * yz + a * x, one - b * (xx + yy)),
        ],
    }
}

/// Orthonormal basis `(t, b)` completing unit `n` (Duff et al. branchless form).
pub fn onb<S: Real>(n: V3<S>) -> (V3<S>, V3<S>) {
    let nz = n.z.value();
    let sign = if nz >= 0.0 { 1.0 } else { -1.0 };
    n.z.branch(u64::from(nz >= 0.0));
    let a = (n.z + sign).lift(-1.0) / (n.z + sign);
    let b = n.x * n.y * a;
    let t = V3::new(n.x * n.x * a * sign + 1.0, b * sign, n.x * (-sign));
    let bt = V3::new(b, n.y * n.y * a + sign, -n.y);
    (t, bt)
}
