use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::{unary_derivs, Unary};
use super::Real;

/// Forward-mode number with `N` independent tangent directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Multi<const N: usize> {
    pub value: f64,
    pub grad: [f64; N],
}

impl<const N: usize> Multi<N> {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            grad: [0.0; N],
        }
    }

    /// Independent variable along direction `k`.
    pub fn variable(value: f64, k: usize) -> Self {
        let mut grad = [0.0; N];
        grad[k] = 1.0;
        Self { value, grad }
    }

    #[inline]
    fn chain(self, v: f64, d: f64) -> Self {
        let mut grad = self.grad;
        for g in &mut grad {
            *g *= d;
        }
        Self { value: v, grad }
    }

    fn unary(self, op: Unary) -> Self {
        let (v, d1, _) = unary_derivs(op, self.value);
        self.chain(v, d1)
    }
}

impl<const N: usize> Add for Multi<N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut grad = self.grad;
        for (g, r) in grad.iter_mut().zip(rhs.grad) {
            *g += r;
        }
        Self {
            value: self.value + rhs.value,
            grad,
        }
    }
}

impl<const N: usize> Sub for Multi<N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut grad = self.grad;
        for (g, r) in grad.iter_mut().zip(rhs.grad) {
            *g -= r;
        }
        Self {
            value: self.value - rhs.value,
            grad,
        }
    }
}

impl<const N: usize> Mul for Multi<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut grad = self.grad;
        for (g, r) in grad.iter_mut().zip(rhs.grad) {
            *g = *g * rhs.value + r * self.value;
        }
        Self {
            value: self.value * rhs.value,
            grad,
        }
    }
}

impl<const N: usize> Div for Multi<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.value;
        let value = self.value * inv;
        let mut grad = self.grad;
        for (g, r) in grad.iter_mut().zip(rhs.grad) {
            *g = (*g - value * r) * inv;
        }
        Self { value, grad }
    }
}

impl<const N: usize> Neg for Multi<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.value, -1.0)
    }
}

impl<const N: usize> Add<f64> for Multi<N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        Self {
            value: self.value + rhs,
            grad: self.grad,
        }
    }
}

impl<const N: usize> Sub<f64> for Multi<N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        Self {
            value: self.value - rhs,
            grad: self.grad,
        }
    }
}

impl<const N: usize> Mul<f64> for Multi<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.chain(self.value * rhs, rhs)
    }
}

impl<const N: usize> Real for Multi<N> {
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    fn val(&self) -> f64 {
        self.value
    }
    fn tanh(self) -> Self {
        self.unary(Unary::Tanh)
    }
    fn sigmoid(self) -> Self {
        self.unary(Unary::Sigmoid)
    }
    fn exp(self) -> Self {
        self.unary(Unary::Exp)
    }
    fn sin(self) -> Self {
        self.unary(Unary::Sin)
    }
    fn cos(self) -> Self {
        self.unary(Unary::Cos)
    }
    fn ln(self) -> Self {
        self.unary(Unary::Ln)
    }
    fn sqrt(self) -> Self {
        self.unary(Unary::Sqrt)
    }
    fn powi(self, n: i32) -> Self {
        self.unary(Unary::Powi(n))
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.value;
        self.chain(r, -r * r)
    }
}
