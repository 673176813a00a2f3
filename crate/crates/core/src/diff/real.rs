use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar abstraction shared by plain evaluation (`f64`), reverse-mode
/// recording ([`Var`](super::Var)) and forward-mode gradients
/// ([`Dual3`](super::Dual3)).
///
/// Every numeric routine on the rendering path is written once against this
/// trait, so the recorded value of a loss is the plain value bit for bit.
///
/// Methods with a kink (`abs`, `max`, `min`, `clamp`) report
/// the branch they take to the recording context, which lets the gradient
/// checker notice when a finite-difference stencil straddles a kink.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(&self) -> f64;

    /// A constant living in the same context as `self`.
    fn lift(&self, v: f64) -> Self;

    /// A node whose value and local partials were computed by hand.
    fn custom(&self, value: f64, parents: &[(Self, f64)]) -> Self;

    /// Report a discrete decision taken while evaluating.
    fn branch(&self, _key: u64) {}

    fn sqrt(self) -> Self {
        let v = self.value().sqrt();
        self.custom(v, &[(self, 0.5 / v)])
    }

    fn sin(self) -> Self {
        let x = self.value();
        self.custom(x.sin(), &[(self, x.cos())])
    }

    fn cos(self) -> Self {
        let x = self.value();
        self.custom(x.cos(), &[(self, -x.sin())])
    }

    fn exp(self) -> Self {
        let v = self.value().exp();
        self.custom(v, &[(self, v)])
    }

    fn ln(self) -> Self {
        let x = self.value();
        self.custom(x.ln(), &[(self, 1.0 / x)])
    }

    fn powf(self, e: f64) -> Self {
        let x = self.value();
        self.custom(x.powf(e), &[(self, e * x.powf(e - 1.0))])
    }

    fn atan2(self, x: Self) -> Self {
        let (yv, xv) = (self.value(), x.value());
        let r2 = xv * xv + yv * yv;
        self.custom(yv.atan2(xv), &[(self, xv / r2), (x, -yv / r2)])
    }

    fn abs(self) -> Self {
        let x = self.value();
        self.branch(u64::from(x < 0.0));
        if x < 0.0 {
            -self
        } else {
            self
        }
    }

    fn max(self, o: Self) -> Self {
        let take = self.value() >= o.value();
        self.branch(u64::from(take));
        if take {
            self
        } else {
            o
        }
    }

    fn min(self, o: Self) -> Self {
        let take = self.value() <= o.value();
        self.branch(u64::from(take));
        if take {
            self
        } else {
            o
        }
    }

    /// `max(0, x)`.
    fn relu(self) -> Self {
        self.max(self.lift(0.0))
    }

    fn clamp(self, lo: f64, hi: f64) -> Self {
        let x = self.value();
        if x < lo {
            self.branch(1);
            self.lift(lo)
        } else if x > hi {
            self.branch(2);
            self.lift(hi)
        } else {
            self.branch(3);
            self
        }
    }

    fn square(self) -> Self {
        self * self
    }

    /// Splits `x` into `(floor(x), x - floor(x))`, the integer part detached.
    fn floor_frac(self) -> (i64, Self) {
        let f = self.value().floor();
        (f as i64, self - f)
    }

    /// `3f² − 2f³` as one node.
    fn smoothstep(self) -> Self {
        let f = self.value();
        self.custom(f * f * (3.0 - 2.0 * f), &[(self, 6.0 * f * (1.0 - f))])
    }
}

impl Real for f64 {
    #[inline]
    fn value(&self) -> f64 {
        *self
    }

    #[inline]
    fn lift(&self, v: f64) -> Self {
        v
    }

    #[inline]
    fn custom(&self, value: f64, _parents: &[(Self, f64)]) -> Self {
        value
    }

    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    fn sin(self) -> Self {
        f64::sin(self)
    }

    fn cos(self) -> Self {
        f64::cos(self)
    }

    fn exp(self) -> Self {
        f64::exp(self)
    }

    fn ln(self) -> Self {
        f64::ln(self)
    }

    fn powf(self, e: f64) -> Self {
        f64::powf(self, e)
    }

    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
}

/// Sum with a fixed left-to-right reduction order, recorded as one node.
pub fn sum<S: Real>(anchor: S, xs: &[S]) -> S {
    let mut acc = 0.0;
    for x in xs {
        acc += x.value();
    }
    let parents: Vec<(S, f64)> = xs.iter().map(|&x| (x, 1.0)).collect();
    anchor.custom(acc, &parents)
}

/// Weighted sum `Σ w_i x_i`, recorded as one node.
pub fn dot_const<S: Real>(anchor: S, xs: &[S], w: &[f64]) -> S {
    debug_assert_eq!(xs.len(), w.len());
    let mut acc = 0.0;
    for (x, w) in xs.iter().zip(w) {
        acc += x.value() * w;
    }
    let parents: Vec<(S, f64)> = xs.iter().zip(w).map(|(&x, &w)| (x, w)).collect();
    anchor.custom(acc, &parents)
}
