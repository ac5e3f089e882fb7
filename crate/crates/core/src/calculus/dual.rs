//! Scalar types for forward-mode differentiation.
//!
//! [`Dual<T>`] carries a value together with its gradient along the four
//! coordinate directions. Because `Dual<T>` is itself a [`Real`] whenever `T`
//! is, nesting (`Dual<Dual<f64>>`, ...) yields exact higher derivatives: every
//! chart map, potential and matter profile in this crate is written once,
//! generically over `T: Real`, and differentiated as deeply as needed.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// A real scalar that field expressions can be evaluated on.
pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    /// Nesting depth: 0 for `f64`, one more for each `Dual` layer.
    const DEPTH: usize;

    fn cst(x: f64) -> Self;

    /// The innermost plain value.
    fn re(&self) -> f64;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn recip(self) -> Self;
    fn powi(self, n: i32) -> Self;

    #[inline]
    fn zero() -> Self {
        Self::cst(0.0)
    }

    #[inline]
    fn one() -> Self {
        Self::cst(1.0)
    }
}

impl Real for f64 {
    const DEPTH: usize = 0;

    #[inline]
    fn cst(x: f64) -> Self {
        x
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn recip(self) -> Self {
        f64::recip(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// Value plus gradient over the four coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: [T; 4],
}

impl<T: Real> Dual<T> {
    #[inline]
    pub fn constant(re: T) -> Self {
        Dual {
            re,
            eps: [T::zero(); 4],
        }
    }

    /// The independent variable `u^dir` with value `re`.
    #[inline]
    pub fn variable(re: T, dir: usize) -> Self {
        let mut eps = [T::zero(); 4];
        eps[dir] = T::one();
        Dual { re, eps }
    }

    /// Lift a coordinate point so that component `k` is the variable `u^k`.
    pub fn seed(u: &[T; 4]) -> [Self; 4] {
        std::array::from_fn(|k| Self::variable(u[k], k))
    }

    /// Apply a scalar function with value `f` and derivative `df` at `self.re`.
    #[inline]
    fn chain(self, f: T, df: T) -> Self {
        Dual {
            re: f,
            eps: self.eps.map(|e| e * df),
        }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Dual {
            re: self.re + rhs.re,
            eps: std::array::from_fn(|k| self.eps[k] + rhs.eps[k]),
        }
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Dual {
            re: self.re - rhs.re,
            eps: std::array::from_fn(|k| self.eps[k] - rhs.eps[k]),
        }
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Dual {
            re: self.re * rhs.re,
            eps: std::array::from_fn(|k| self.eps[k] * rhs.re + self.re * rhs.eps[k]),
        }
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = rhs.re.recip();
        let q = self.re * inv;
        Dual {
            re: q,
            eps: std::array::from_fn(|k| (self.eps[k] - q * rhs.eps[k]) * inv),
        }
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual {
            re: -self.re,
            eps: self.eps.map(|e| -e),
        }
    }
}

impl<T: Real> Add<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        Dual {
            re: self.re + rhs,
            eps: self.eps,
        }
    }
}

impl<T: Real> Sub<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        Dual {
            re: self.re - rhs,
            eps: self.eps,
        }
    }
}

impl<T: Real> Mul<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        Dual {
            re: self.re * rhs,
            eps: self.eps.map(|e| e * rhs),
        }
    }
}

impl<T: Real> Div<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self * rhs.recip()
    }
}

impl<T: Real> AddAssign for Dual<T> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Real> SubAssign for Dual<T> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<T: Real> MulAssign for Dual<T> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<T: Real> Real for Dual<T> {
    const DEPTH: usize = T::DEPTH + 1;

    #[inline]
    fn cst(x: f64) -> Self {
        Dual::constant(T::cst(x))
    }

    #[inline]
    fn re(&self) -> f64 {
        self.re.re()
    }

    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }

    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }

    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, (s * 2.0).recip())
    }

    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }

    fn ln(self) -> Self {
        self.chain(self.re.ln(), self.re.recip())
    }

    fn recip(self) -> Self {
        let r = self.re.recip();
        self.chain(r, -(r * r))
    }

    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::one(),
            1 => self,
            _ => self.chain(self.re.powi(n), self.re.powi(n - 1) * n as f64),
        }
    }
}

/// Read the gradient out of a dual-valued result.
#[inline]
pub fn gradient<T: Real>(d: &Dual<T>) -> [T; 4] {
    d.eps
}
