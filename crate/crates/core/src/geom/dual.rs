//! Forward-mode dual numbers with two partial derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar arithmetic shared by `f64` and [`Dual`], so that first-order
/// formulas can be differentiated once more by evaluating them on duals.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn sqrt(self) -> Self;
    fn value(self) -> f64;
}

impl Scalar for f64 {
    fn cst(v: f64) -> f64 {
        v
    }
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }
    fn value(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; 2],
}

impl Dual {
    pub fn new(v: f64, d: [f64; 2]) -> Dual {
        Dual { v, d }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, [self.d[0] + o.d[0], self.d[1] + o.d[1]])
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, [self.d[0] - o.d[0], self.d[1] - o.d[1]])
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(
            self.v * o.v,
            [self.d[0] * o.v + self.v * o.d[0], self.d[1] * o.v + self.v * o.d[1]],
        )
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let q = self.v / o.v;
        Dual::new(q, [(self.d[0] - q * o.d[0]) / o.v, (self.d[1] - q * o.d[1]) / o.v])
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.v, [-self.d[0], -self.d[1]])
    }
}

impl Scalar for Dual {
    fn cst(v: f64) -> Dual {
        Dual::new(v, [0.0, 0.0])
    }
    fn sqrt(self) -> Dual {
        let s = self.v.sqrt();
        Dual::new(s, [self.d[0] / (2.0 * s), self.d[1] / (2.0 * s)])
    }
    fn value(self) -> f64 {
        self.v
    }
}
