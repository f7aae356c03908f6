//! Forward-mode dual numbers, so closed-form expressions can be written once
//! and differentiated exactly along a trajectory.

use core::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar interface shared by `f64` and [`Dual`].
pub trait Real:
    Copy
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;
    fn asin(self) -> Self;
    fn sqrt(self) -> Self;
    fn ln(self) -> Self;

    fn scale(self, s: f64) -> Self {
        self * Self::cst(s)
    }
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        num_traits::Float::sin(self)
    }
    fn cos(self) -> Self {
        num_traits::Float::cos(self)
    }
    fn tan(self) -> Self {
        num_traits::Float::tan(self)
    }
    fn sinh(self) -> Self {
        num_traits::Float::sinh(self)
    }
    fn cosh(self) -> Self {
        num_traits::Float::cosh(self)
    }
    fn asin(self) -> Self {
        num_traits::Float::asin(self)
    }
    fn sqrt(self) -> Self {
        num_traits::Float::sqrt(self)
    }
    fn ln(self) -> Self {
        num_traits::Float::ln(self)
    }
}

/// a + b·ε with ε² = 0.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub fn new(re: f64, eps: f64) -> Self {
        Dual { re, eps }
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl Div for Dual {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        Dual::new(self.re / o.re, (self.eps * o.re - self.re * o.eps) / (o.re * o.re))
    }
}

impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}

impl Real for Dual {
    fn cst(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    fn value(self) -> f64 {
        self.re
    }
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.eps * self.re.cos())
    }
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -self.eps * self.re.sin())
    }
    fn tan(self) -> Self {
        let t = self.re.tan();
        Dual::new(t, self.eps * (1.0 + t * t))
    }
    fn sinh(self) -> Self {
        Dual::new(self.re.sinh(), self.eps * self.re.cosh())
    }
    fn cosh(self) -> Self {
        Dual::new(self.re.cosh(), self.eps * self.re.sinh())
    }
    fn asin(self) -> Self {
        Dual::new(self.re.asin(), self.eps / (1.0 - self.re * self.re).sqrt())
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s, self.eps / (2.0 * s))
    }
    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.eps / self.re)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f<T: Real>(x: T) -> T {
        (x.sin() * x.cosh() + x.sqrt().ln()) / (T::cst(2.0) + x.tan()) - x.scale(0.5).asin()
    }

    #[test]
    fn derivative_matches_central_difference() {
        let x = 0.7;
        let d = f(Dual::new(x, 1.0));
        let h = 1e-6;
        let fd = (f(x + h) - f(x - h)) / (2.0 * h);
        assert_eq!(d.re, f(x));
        assert!((d.eps - fd).abs() < 1e-8);
    }
}
