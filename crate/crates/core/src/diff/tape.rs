use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::{unary_derivs, Unary};
use super::Real;

const NO_PARENT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

#[derive(Debug, Default)]
struct TapeInner {
    nodes: Vec<Node>,
    n_inputs: usize,
    first_non_finite: Option<(usize, &'static str)>,
}

/// Wengert list for reverse accumulation over trainable parameters.
///
/// Parameters are registered first and occupy the leading slots; every
/// subsequent operation appends one node with at most two parents.
#[derive(Debug, Default)]
pub struct ParamTape {
    inner: RefCell<TapeInner>,
}

/// Scalar recorded on a [`ParamTape`]. Constants carry no tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t ParamTape>,
    idx: u32,
    value: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({}, #{})", self.value, self.idx)
    }
}

impl ParamTape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers parameters; must be called before any other operation.
    pub fn inputs(&self, values: &[f64]) -> Vec<Var<'_>> {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(
            inner.nodes.len(),
            inner.n_inputs,
            "inputs must be registered before operations"
        );
        values
            .iter()
            .map(|&v| {
                let idx = inner.nodes.len() as u32;
                inner.nodes.push(Node {
                    parents: [NO_PARENT; 2],
                    partials: [0.0; 2],
                });
                inner.n_inputs += 1;
                if !v.is_finite() && inner.first_non_finite.is_none() {
                    inner.first_non_finite = Some((idx as usize, "input"));
                }
                Var {
                    tape: Some(self),
                    idx,
                    value: v,
                }
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First recorded node with a NaN or infinite value, with its primitive.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.inner.borrow().first_non_finite
    }

    fn push(&self, value: f64, op: &'static str, parents: [(u32, f64); 2]) -> u32 {
        let mut inner = self.inner.borrow_mut();
        let idx = inner.nodes.len();
        if !value.is_finite() && inner.first_non_finite.is_none() {
            inner.first_non_finite = Some((idx, op));
        }
        inner.nodes.push(Node {
            parents: [parents[0].0, parents[1].0],
            partials: [parents[0].1, parents[1].1],
        });
        idx as u32
    }

    /// Reverse sweep from `output`; returns the adjoint of every registered input.
    pub fn gradient(&self, output: Var<'_>) -> Vec<f64> {
        let inner = self.inner.borrow();
        let mut adj = vec![0.0; inner.nodes.len()];
        if output.tape.is_none() {
            return adj[..inner.n_inputs].to_vec();
        }
        adj[output.idx as usize] = 1.0;
        for i in (0..=output.idx as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = inner.nodes[i];
            for k in 0..2 {
                let p = node.parents[k];
                if p != NO_PARENT {
                    adj[p as usize] += a * node.partials[k];
                }
            }
        }
        adj.truncate(inner.n_inputs);
        adj
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.value
    }

    fn binary(self, rhs: Self, value: f64, op: &'static str, da: f64, db: f64) -> Self {
        match (self.tape, rhs.tape) {
            (None, None) => Self {
                tape: None,
                idx: NO_PARENT,
                value,
            },
            (Some(t), None) => Self {
                tape: Some(t),
                idx: t.push(value, op, [(self.idx, da), (NO_PARENT, 0.0)]),
                value,
            },
            (None, Some(t)) => Self {
                tape: Some(t),
                idx: t.push(value, op, [(NO_PARENT, 0.0), (rhs.idx, db)]),
                value,
            },
            (Some(t), Some(_)) => Self {
                tape: Some(t),
                idx: t.push(value, op, [(self.idx, da), (rhs.idx, db)]),
                value,
            },
        }
    }

    fn scaled(self, value: f64, op: &'static str, d: f64) -> Self {
        match self.tape {
            None => Self {
                tape: None,
                idx: NO_PARENT,
                value,
            },
            Some(t) => Self {
                tape: Some(t),
                idx: t.push(value, op, [(self.idx, d), (NO_PARENT, 0.0)]),
                value,
            },
        }
    }

    fn unary(self, op: Unary) -> Self {
        let (v, d1, _) = unary_derivs(op, self.value);
        self.scaled(v, op.name(), d1)
    }
}

impl Add for Var<'_> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.value + rhs.value, "add", 1.0, 1.0)
    }
}

impl Sub for Var<'_> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.value - rhs.value, "sub", 1.0, -1.0)
    }
}

impl Mul for Var<'_> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.value * rhs.value, "mul", rhs.value, self.value)
    }
}

impl Div for Var<'_> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.value;
        let q = self.value * inv;
        self.binary(rhs, q, "div", inv, -q * inv)
    }
}

impl Neg for Var<'_> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scaled(-self.value, "neg", -1.0)
    }
}

impl Add<f64> for Var<'_> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        self.scaled(self.value + rhs, "add", 1.0)
    }
}

impl Sub<f64> for Var<'_> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        self.scaled(self.value - rhs, "sub", 1.0)
    }
}

impl Mul<f64> for Var<'_> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.scaled(self.value * rhs, "mul", rhs)
    }
}

impl Real for Var<'_> {
    fn cst(v: f64) -> Self {
        Var {
            tape: None,
            idx: NO_PARENT,
            value: v,
        }
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
        self.unary(Unary::Recip)
    }
}
