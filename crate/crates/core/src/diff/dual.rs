use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::Real;

/// Forward-mode scalar carrying a gradient with respect to three seeds.
///
/// Used to get exact local Jacobians of small vector functions (the SH basis
/// with respect to its direction) that are then recorded as single custom
/// nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual3 {
    pub v: f64,
    pub d: [f64; 3],
}

impl Dual3 {
    pub fn constant(v: f64) -> Self {
        Dual3 { v, d: [0.0; 3] }
    }

    pub fn seed(v: f64, axis: usize) -> Self {
        let mut d = [0.0; 3];
        d[axis] = 1.0;
        Dual3 { v, d }
    }

    fn chain(self, v: f64, k: f64) -> Self {
        Dual3 { v, d: [self.d[0] * k, self.d[1] * k, self.d[2] * k] }
    }
}

impl Real for Dual3 {
    #[inline]
    fn value(&self) -> f64 {
        self.v
    }

    fn lift(&self, v: f64) -> Self {
        Dual3::constant(v)
    }

    fn custom(&self, value: f64, parents: &[(Self, f64)]) -> Self {
        let mut d = [0.0; 3];
        for (p, k) in parents {
            for (di, pi) in d.iter_mut().zip(p.d) {
                *di += pi * k;
            }
        }
        Dual3 { v: value, d }
    }
}

impl Add for Dual3 {
    type Output = Dual3;
    fn add(self, o: Dual3) -> Dual3 {
        Dual3 { v: self.v + o.v, d: [self.d[0] + o.d[0], self.d[1] + o.d[1], self.d[2] + o.d[2]] }
    }
}

impl Sub for Dual3 {
    type Output = Dual3;
    fn sub(self, o: Dual3) -> Dual3 {
        Dual3 { v: self.v - o.v, d: [self.d[0] - o.d[0], self.d[1] - o.d[1], self.d[2] - o.d[2]] }
    }
}

impl Mul for Dual3 {
    type Output = Dual3;
    fn mul(self, o: Dual3) -> Dual3 {
        Dual3 {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + o.d[0] * self.v,
                self.d[1] * o.v + o.d[1] * self.v,
                self.d[2] * o.v + o.d[2] * self.v,
            ],
        }
    }
}

impl Div for Dual3 {
    type Output = Dual3;
    fn div(self, o: Dual3) -> Dual3 {
        let q = self.v / o.v;
        Dual3 {
            v: q,
            d: [(self.d[0] - q * o.d[0]) / o.v, (self.d[1] - q * o.d[1]) / o.v, (self.d[2] - q * o.d[2]) / o.v],
        }
    }
}

impl Neg for Dual3 {
    type Output = Dual3;
    fn neg(self) -> Dual3 {
        self.chain(-self.v, -1.0)
    }
}

impl Add<f64> for Dual3 {
    type Output = Dual3;
    fn add(self, c: f64) -> Dual3 {
        Dual3 { v: self.v + c, d: self.d }
    }
}

impl Sub<f64> for Dual3 {
    type Output = Dual3;
    fn sub(self, c: f64) -> Dual3 {
        Dual3 { v: self.v - c, d: self.d }
    }
}

impl Mul<f64> for Dual3 {
    type Output = Dual3;
    fn mul(self, c: f64) -> Dual3 {
        self.chain(self.v * c, c)
    }
}

impl Div<f64> for Dual3 {
    type Output = Dual3;
    fn div(self, c: f64) -> Dual3 {
        self.chain(self.v / c, 1.0 / c)
    }
}
