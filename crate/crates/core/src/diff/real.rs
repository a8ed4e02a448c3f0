use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::EvalError;

/// Scalar arithmetic shared by plain floats, dual numbers and tape variables.
///
/// Every model in the crate (field network, symplectic network, lifting
/// functions, sources, exact solutions) is written once against this trait and
/// then evaluated with whatever scalar the caller needs: `f64` for plain
/// values, [`Dual2`](super::Dual2) for spatial derivatives,
/// [`Multi`](super::Multi) for small forward-mode gradients and
/// [`Var`](super::Var) for reverse accumulation over parameters.
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
{
    /// Lifts a constant.
    fn cst(v: f64) -> Self;

    /// Underlying float value.
    fn val(&self) -> f64;

    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
    fn exp(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// Natural logarithm; unchecked, see [`Real::try_ln`].
    fn ln(self) -> Self;
    /// Square root; unchecked, see [`Real::try_sqrt`].
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn one() -> Self {
        Self::cst(1.0)
    }

    fn powf(self, p: f64) -> Self {
        (self.ln() * p).exp()
    }

    fn recip(self) -> Self {
        Self::one() / self
    }

    fn square(self) -> Self {
        self * self
    }

    fn try_div(self, rhs: Self) -> Result<Self, EvalError> {
        if rhs.val() == 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        Ok(self / rhs)
    }

    fn try_ln(self) -> Result<Self, EvalError> {
        if self.val() <= 0.0 {
            return Err(EvalError::Domain {
                primitive: "log",
                value: self.val(),
            });
        }
        Ok(self.ln())
    }

    fn try_sqrt(self) -> Result<Self, EvalError> {
        if self.val() < 0.0 {
            return Err(EvalError::Domain {
                primitive: "sqrt",
                value: self.val(),
            });
        }
        Ok(self.sqrt())
    }
}

pub(crate) fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn val(&self) -> f64 {
        *self
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn sigmoid(self) -> Self {
        sigmoid_f64(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
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
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
}

/// Value and first two derivatives of the elementary unary primitives.
///
/// Used by the dual-number types to apply the chain rule; the second
/// derivative feeds the optional Hessian block of [`Dual2`](super::Dual2).
pub(crate) fn unary_derivs<S: Real>(op: Unary, x: S) -> (S, S, S) {
    match op {
        Unary::Tanh => {
            let t = x.tanh();
            let d1 = S::one() - t * t;
            (t, d1, t * d1 * -2.0)
        }
        Unary::Sigmoid => {
            let s = x.sigmoid();
            let d1 = s * (S::one() - s);
            (s, d1, d1 * (S::one() - s * 2.0))
        }
        Unary::Exp => {
            let e = x.exp();
            (e, e, e)
        }
        Unary::Sin => {
            let s = x.sin();
            (s, x.cos(), -s)
        }
        Unary::Cos => {
            let c = x.cos();
            (c, -x.sin(), -c)
        }
        Unary::Ln => {
            let r = x.recip();
            (x.ln(), r, -(r * r))
        }
        Unary::Sqrt => {
            let s = x.sqrt();
            let d1 = (s * 2.0).recip();
            (s, d1, -(d1 / (x * 2.0)))
        }
        Unary::Recip => {
            let r = x.recip();
            (r, -(r * r), r * r * r * 2.0)
        }
        Unary::Powi(n) => {
            let nf = n as f64;
            let v = x.powi(n);
            let d1 = if n == 0 {
                S::zero()
            } else {
                x.powi(n - 1) * nf
            };
            let d2 = if n == 0 || n == 1 {
                S::zero()
            } else {
                x.powi(n - 2) * (nf * (nf - 1.0))
            };
            (v, d1, d2)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Unary {
    Tanh,
    Sigmoid,
    Exp,
    Sin,
    Cos,
    Ln,
    Sqrt,
    Recip,
    Powi(i32),
}

impl Unary {
    pub(crate) fn name(self) -> &'static str {
        match self {
            Unary::Tanh => "tanh",
            Unary::Sigmoid => "sigmoid",
            Unary::Exp => "exp",
            Unary::Sin => "sin",
            Unary::Cos => "cos",
            Unary::Ln => "log",
            Unary::Sqrt => "sqrt",
            Unary::Recip => "recip",
            Unary::Powi(_) => "powi",
        }
    }
}
