use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::{unary_derivs, Unary};
use super::Real;

/// Forward-mode dual number over the two spatial inputs.
///
/// Carries the value, both first partials and, when enabled at seeding time,
/// the three distinct second partials `(xx, xy, yy)`. The component type is
/// itself generic so that spatial derivatives can be taken of tape variables
/// (mixed parameter/space differentiation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual2<S = f64> {
    pub value: S,
    pub grad: [S; 2],
    /// Hessian block `[d11, d12, d22]`; `None` means second order is off.
    pub hess: Option<[S; 3]>,
}

/// Value plus spatial gradient of a scalar field at a point.
pub type Jet = Dual2<f64>;

impl<S: Real> Dual2<S> {
    pub fn constant(value: S) -> Self {
        Self {
            value,
            grad: [S::zero(), S::zero()],
            hess: None,
        }
    }

    pub fn new(value: S, grad: [S; 2]) -> Self {
        Self {
            value,
            grad,
            hess: None,
        }
    }

    /// Seeds the point `(x1, x2)` as independent spatial variables.
    pub fn seed(x: [S; 2]) -> [Self; 2] {
        [
            Self::new(x[0], [S::one(), S::zero()]),
            Self::new(x[1], [S::zero(), S::one()]),
        ]
    }

    /// Same as [`Dual2::seed`] with the second-order block switched on.
    pub fn seed_second_order(x: [S; 2]) -> [Self; 2] {
        let z = [S::zero(); 3];
        let [a, b] = Self::seed(x);
        [Self { hess: Some(z), ..a }, Self { hess: Some(z), ..b }]
    }

    /// Laplacian, available when the second-order block is on.
    pub fn laplacian(&self) -> Option<S> {
        self.hess.map(|h| h[0] + h[2])
    }

    fn unary(self, op: Unary) -> Self {
        let (v, d1, d2) = unary_derivs(op, self.value);
        let grad = [self.grad[0] * d1, self.grad[1] * d1];
        let hess = self.hess.map(|h| {
            let g = self.grad;
            [
                h[0] * d1 + g[0] * g[0] * d2,
                h[1] * d1 + g[0] * g[1] * d2,
                h[2] * d1 + g[1] * g[1] * d2,
            ]
        });
        Self {
            value: v,
            grad,
            hess,
        }
    }
}

fn merge_hess<S: Real>(
    a: Option<[S; 3]>,
    b: Option<[S; 3]>,
    f: impl Fn([S; 3], [S; 3]) -> [S; 3],
) -> Option<[S; 3]> {
    match (a, b) {
        (None, None) => None,
        (a, b) => {
            let z = [S::zero(); 3];
            Some(f(a.unwrap_or(z), b.unwrap_or(z)))
        }
    }
}

impl<S: Real> Add for Dual2<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            value: self.value + rhs.value,
            grad: [self.grad[0] + rhs.grad[0], self.grad[1] + rhs.grad[1]],
            hess: merge_hess(self.hess, rhs.hess, |a, b| {
                [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
            }),
        }
    }
}

impl<S: Real> Sub for Dual2<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self {
            value: self.value - rhs.value,
            grad: [self.grad[0] - rhs.grad[0], self.grad[1] - rhs.grad[1]],
            hess: merge_hess(self.hess, rhs.hess, |a, b| {
                [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
            }),
        }
    }
}

impl<S: Real> Mul for Dual2<S> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (self, rhs);
        let hess = merge_hess(a.hess, b.hess, |ha, hb| {
            let (ga, gb) = (a.grad, b.grad);
            [
                ha[0] * b.value + hb[0] * a.value + ga[0] * gb[0] * 2.0,
                ha[1] * b.value + hb[1] * a.value + ga[0] * gb[1] + ga[1] * gb[0],
                ha[2] * b.value + hb[2] * a.value + ga[1] * gb[1] * 2.0,
            ]
        });
        Self {
            value: a.value * b.value,
            grad: [
                a.grad[0] * b.value + b.grad[0] * a.value,
                a.grad[1] * b.value + b.grad[1] * a.value,
            ],
            hess,
        }
    }
}

impl<S: Real> Div for Dual2<S> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        self * rhs.unary(Unary::Recip)
    }
}

impl<S: Real> Neg for Dual2<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            value: -self.value,
            grad: [-self.grad[0], -self.grad[1]],
            hess: self.hess.map(|h| [-h[0], -h[1], -h[2]]),
        }
    }
}

impl<S: Real> Add<f64> for Dual2<S> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        Self {
            value: self.value + rhs,
            ..self
        }
    }
}

impl<S: Real> Sub<f64> for Dual2<S> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        Self {
            value: self.value - rhs,
            ..self
        }
    }
}

impl<S: Real> Mul<f64> for Dual2<S> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self {
            value: self.value * rhs,
            grad: [self.grad[0] * rhs, self.grad[1] * rhs],
            hess: self.hess.map(|h| [h[0] * rhs, h[1] * rhs, h[2] * rhs]),
        }
    }
}

impl<S: Real> Real for Dual2<S> {
    fn cst(v: f64) -> Self {
        Self::constant(S::cst(v))
    }
    fn val(&self) -> f64 {
        self.value.val()
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
        self.unary(Unary::Recip)
    }
}
