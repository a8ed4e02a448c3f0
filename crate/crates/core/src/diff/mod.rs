//! Exact derivatives for the networks and losses.
//!
//! Spatial derivatives use forward-mode [`Dual2`] numbers over the two input
//! coordinates; parameter gradients use reverse accumulation on a
//! [`ParamTape`]. Nesting `Dual2<Var>` differentiates losses that contain
//! spatial gradients with respect to the parameters.

mod dual;
mod multi;
mod real;
mod tape;

pub use dual::{Dual2, Jet};
pub use multi::Multi;
pub(crate) use real::sigmoid_f64;
pub use real::Real;
pub use tape::{ParamTape, Var};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("{primitive} evaluated outside its domain at {value}")]
    Domain { primitive: &'static str, value: f64 },
    #[error("non-finite value produced by `{primitive}` (node {node})")]
    NonFinite {
        primitive: &'static str,
        node: usize,
    },
}

/// Value and spatial gradient of `f` at `x`.
pub fn eval_with_spatial_grad<F>(f: F, x: [f64; 2]) -> Result<Jet, EvalError>
where
    F: FnOnce([Dual2<f64>; 2]) -> Result<Dual2<f64>, EvalError>,
{
    f(Dual2::seed(x))
}

/// Loss value and its gradient with respect to every entry of `params`.
///
/// The closure receives the parameters as tape variables and may build
/// spatial derivatives internally via `Dual2<Var>`. Any NaN or infinity
/// recorded during the forward pass is reported as [`EvalError::NonFinite`]
/// naming the first offending primitive.
pub fn loss_param_gradient<F>(params: &[f64], loss: F) -> Result<(f64, Vec<f64>), EvalError>
where
    F: for<'t> FnOnce(&[Var<'t>]) -> Result<Var<'t>, EvalError>,
{
    let tape = ParamTape::new();
    let vars = tape.inputs(params);
    let out = loss(&vars)?;
    if let Some((node, primitive)) = tape.first_non_finite() {
        return Err(EvalError::NonFinite { primitive, node });
    }
    if !out.value().is_finite() {
        return Err(EvalError::NonFinite {
            primitive: "output",
            node: tape.len(),
        });
    }
    Ok((out.value(), tape.gradient(out)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn central_diff(f: impl Fn([f64; 2]) -> f64, x: [f64; 2], h: f64) -> [f64; 2] {
        let d0 = (f([x[0] + h, x[1]]) - f([x[0] - h, x[1]])) / (2.0 * h);
        let d1 = (f([x[0], x[1] + h]) - f([x[0], x[1] - h])) / (2.0 * h);
        [d0, d1]
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }

    fn composite<S: Real>(x: [S; 2]) -> S {
        let r2 = x[0] * x[0] + x[1] * x[1] + 1.0;
        (x[0] * 0.3).tanh() * r2.sqrt() + (x[1] * 0.2).sin() * r2.ln()
            - (x[0] * x[1] * 0.01).exp() / r2
            + (x[1] * 0.5).sigmoid() * (x[0] * 0.1).cos()
            + (x[0] * 0.1).powi(3)
    }

    #[test]
    fn polynomial_value_and_grad() {
        let j = eval_with_spatial_grad(|[a, b]| Ok(a * a + b * b), [1.0, 2.0]).unwrap();
        assert_eq!(j.value, 5.0);
        assert_eq!(j.grad, [2.0, 4.0]);
    }

    #[test]
    fn constant_has_zero_grad() {
        let j = eval_with_spatial_grad(|_| Ok(Dual2::cst(4.2)), [0.3, -8.0]).unwrap();
        assert_eq!(j.grad, [0.0, 0.0]);
    }

    #[test]
    fn tanh_product_matches_finite_differences() {
        let x = [0.3, 0.7];
        let j = eval_with_spatial_grad(|[a, b]| Ok((a * b).tanh()), x).unwrap();
        let fd = central_diff(|p| (p[0] * p[1]).tanh(), x, 1e-6);
        for k in 0..2 {
            assert!(rel_err(j.grad[k], fd[k]) <= 1e-6);
        }
    }

    #[test]
    fn domain_errors_name_primitive() {
        let e = eval_with_spatial_grad(|[a, _]| (a - 1.0).try_ln(), [0.5, 0.0]).unwrap_err();
        assert_eq!(
            e,
            EvalError::Domain {
                primitive: "log",
                value: -0.5
            }
        );
        let e = eval_with_spatial_grad(|[a, b]| a.try_div(b), [0.5, 0.0]).unwrap_err();
        assert_eq!(e, EvalError::DivisionByZero);
        assert!(eval_with_spatial_grad(|[a, _]| a.try_sqrt(), [-1.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn dual_matches_finite_differences(x0 in -10.0f64..10.0, x1 in -10.0f64..10.0) {
            let j = eval_with_spatial_grad(|x| Ok(composite(x)), [x0, x1]).unwrap();
            let fd = central_diff(composite::<f64>, [x0, x1], 1e-6);
            prop_assert!((j.value - composite([x0, x1])).abs() < 1e-12);
            for k in 0..2 {
                prop_assert!(rel_err(j.grad[k], fd[k]) <= 1e-6, "{} vs {}", j.grad[k], fd[k]);
            }
        }
    }

    #[test]
    fn scalar_square_gradient() {
        let (v, g) = loss_param_gradient(&[3.0], |p| Ok(p[0] * p[0])).unwrap();
        assert_eq!(v, 9.0);
        assert_eq!(g, vec![6.0]);
    }

    #[test]
    fn unused_parameter_has_exact_zero() {
        let (_, g) = loss_param_gradient(&[3.0, 1.5], |p| Ok(p[0].sin())).unwrap();
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn non_finite_names_first_primitive() {
        let e = loss_param_gradient(&[-1.0], |p| Ok(p[0].sqrt() * 2.0 + 1.0)).unwrap_err();
        assert_eq!(
            e,
            EvalError::NonFinite {
                primitive: "sqrt",
                node: 1
            }
        );
    }

    /// `|grad_x v|^2` for a one-hidden-layer tanh network with parameters
    /// `[W (h x 2), b (h), c (h), d]`.
    fn tiny_net<S: Real>(p: &[S], h: usize, x: [S; 2]) -> S {
        let mut out = p[4 * h];
        for i in 0..h {
            let z = p[2 * i] * x[0] + p[2 * i + 1] * x[1] + p[2 * h + i];
            out = out + p[3 * h + i] * z.tanh();
        }
        out
    }

    fn grad_sq_loss<S: Real>(p: &[S], h: usize, pts: &[[f64; 2]]) -> S {
        let mut acc = S::zero();
        for x in pts {
            let xs = Dual2::seed([S::cst(x[0]), S::cst(x[1])]);
            let pd: Vec<Dual2<S>> = p.iter().map(|&q| Dual2::constant(q)).collect();
            let v = tiny_net(&pd, h, xs);
            acc = acc + v.grad[0] * v.grad[0] + v.grad[1] * v.grad[1];
        }
        acc
    }

    fn seeded_params(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn mixed_gradient_matches_finite_differences() {
        let h = 4;
        let p = seeded_params(4 * h + 1, 11);
        let pts = [[0.3, -0.2], [-0.7, 0.5], [0.1, 0.9]];
        let (_, g) = loss_param_gradient(&p, |v| Ok(grad_sq_loss(v, h, &pts))).unwrap();
        let step = 1e-6;
        for k in 0..p.len() {
            let mut pp = p.clone();
            pp[k] += step;
            let fp = grad_sq_loss(&pp, h, &pts);
            pp[k] -= 2.0 * step;
            let fm = grad_sq_loss(&pp, h, &pts);
            let fd = (fp - fm) / (2.0 * step);
            assert!(rel_err(g[k], fd) <= 1e-5, "param {k}: {} vs {}", g[k], fd);
        }
    }

    #[test]
    fn mixed_derivative_matches_nested_differences() {
        // d/dtheta of d/dx1 v, against finite differences of finite differences.
        let h = 3;
        let p = seeded_params(4 * h + 1, 5);
        let x = [0.4, -0.3];
        let (_, g) = loss_param_gradient(&p, |v| {
            let xs = Dual2::seed([Var::cst(x[0]), Var::cst(x[1])]);
            let pd: Vec<_> = v.iter().map(|&q| Dual2::constant(q)).collect();
            Ok(tiny_net(&pd, h, xs).grad[0])
        })
        .unwrap();
        let dx = |q: &[f64]| {
            let e = 1e-4;
            (tiny_net(q, h, [x[0] + e, x[1]]) - tiny_net(q, h, [x[0] - e, x[1]])) / (2.0 * e)
        };
        let e = 1e-4;
        for k in 0..p.len() {
            let mut pp = p.clone();
            pp[k] += e;
            let a = dx(&pp);
            pp[k] -= 2.0 * e;
            let b = dx(&pp);
            let fd = (a - b) / (2.0 * e);
            assert!(rel_err(g[k], fd) <= 1e-3, "param {k}: {} vs {}", g[k], fd);
        }
    }

    #[test]
    fn gradients_are_bit_identical_across_calls() {
        let h = 5;
        let p = seeded_params(4 * h + 1, 2);
        let pts = [[0.3, -0.2], [-0.7, 0.5]];
        let a = loss_param_gradient(&p, |v| Ok(grad_sq_loss(v, h, &pts))).unwrap();
        let b = loss_param_gradient(&p, |v| Ok(grad_sq_loss(v, h, &pts))).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert!(a
            .1
            .iter()
            .zip(&b.1)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
