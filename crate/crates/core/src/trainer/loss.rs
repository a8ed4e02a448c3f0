//! Loss assembly for every problem family.
//!
//! The training path evaluates the composition `x -> T(x) -> u(T(x)) -> w`
//! in stages: the map and its Jacobian per point, the field network in
//! batches of [`BATCH`] points, and a small head that turns
//! `(y, J, u, grad u)` into the integrand with nine forward tangents. The
//! adjoints of those nine inputs then run back through the field network and
//! the map. [`loss_and_grad_tape`] evaluates the same losses through the
//! generic models on a parameter tape and serves as the reference.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::diff::{loss_param_gradient, Dual2, EvalError, Multi, Real};
use crate::error::{Error, Result};
use crate::fieldnet::{FieldNetParams, Lifting, BATCH};
use crate::geometry::BoundarySample;
use crate::problems::{benchmark_map, BoundaryCondition, Param, ProblemSpec, Source, Transform};
use crate::sympnet::{Mat2, SympNetParams};

const HEAD: usize = 9;
type H = Multi<HEAD>;

/// `J^{-T} v`.
fn inv_t<S: Real>(j: &[[S; 2]; 2], v: [S; 2]) -> [S; 2] {
    let r = (j[0][0] * j[1][1] - j[0][1] * j[1][0]).recip();
    [
        (j[1][1] * v[0] - j[1][0] * v[1]) * r,
        (j[0][0] * v[1] - j[0][1] * v[0]) * r,
    ]
}

/// `|J^{-T} grad w|^2 / 2 - f w`.
pub fn energy_density<S: Real>(w: &Dual2<S>, jac: &[[S; 2]; 2], f: S) -> S {
    let g = inv_t(jac, w.grad);
    (g[0] * g[0] + g[1] * g[1]) * 0.5 - f * w.value
}

/// `|J^{-T} n| w^2 / 2`.
pub fn robin_density<S: Real>(w: S, jac: &[[S; 2]; 2], n: [f64; 2]) -> S {
    let v = inv_t(jac, [S::cst(n[0]), S::cst(n[1])]);
    (v[0] * v[0] + v[1] * v[1]).sqrt() * w * w * 0.5
}

/// `(|J^{-T} grad w| - c)^2`.
pub fn penalty_density<S: Real>(w: &Dual2<S>, jac: &[[S; 2]; 2], c: f64) -> S {
    let g = inv_t(jac, w.grad);
    ((g[0] * g[0] + g[1] * g[1]).sqrt() - c).square()
}

/// Lifted field with its reference-space gradient, assembled from the map
/// value `y`, its Jacobian and the network output `u` with gradient `g` at `y`.
pub fn assemble<S: Real>(
    lifting: &Lifting,
    x: [f64; 2],
    y: [S; 2],
    jac: &[[S; 2]; 2],
    u: S,
    g: [S; 2],
) -> Result<Dual2<S>, EvalError> {
    let xd = Dual2::seed([S::cst(x[0]), S::cst(x[1])]);
    let yd = [Dual2::new(y[0], jac[0]), Dual2::new(y[1], jac[1])];
    let ud = Dual2::new(
        u,
        [
            jac[0][0] * g[0] + jac[1][0] * g[1],
            jac[0][1] * g[0] + jac[1][1] * g[1],
        ],
    );
    lifting.combine(xd, yd, ud)
}

/// Boundary contribution added to the interior energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryTerm {
    /// `kappa * scale * sum |J^{-T} n| v^2 / 2`.
    Robin { kappa: Param, scale: f64 },
    /// `weight * sum (|grad v| - c)^2`.
    Penalty { c: f64, weight: f64 },
}

/// Collocation data of one loss evaluation. Parameter arrays are point-major.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Collocation {
    pub interior: Vec<[f64; 2]>,
    pub interior_mu: Vec<f64>,
    /// Quadrature weight of each interior point.
    pub interior_weight: f64,
    pub boundary: Vec<BoundarySample>,
    pub boundary_mu: Vec<f64>,
    pub boundary_term: Option<BoundaryTerm>,
}

/// The networks and problem data a loss is evaluated for.
#[derive(Debug, Clone, Copy)]
pub struct Model<'a> {
    pub field: &'a FieldNetParams,
    pub transform: &'a Transform,
    pub lifting: Lifting,
    pub source: Source,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub interior: f64,
    pub boundary: f64,
    /// Gradient with respect to the field network parameters.
    pub theta: Vec<f64>,
    /// Gradient with respect to the map parameters (empty for fixed maps).
    pub omega: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Term<'a> {
    Energy {
        weight: f64,
    },
    Robin {
        kappa: Param,
        scale: f64,
        normals: &'a [BoundarySample],
    },
    Penalty {
        c: f64,
        weight: f64,
    },
}

impl Term<'_> {
    fn name(&self) -> &'static str {
        match self {
            Term::Energy { .. } => "interior energy",
            Term::Robin { .. } => "Robin boundary",
            Term::Penalty { .. } => "boundary penalty",
        }
    }
}

/// Failure of one point of a term, with enough context to replay it.
#[derive(Debug)]
pub(crate) struct PointFailure {
    pub term: &'static str,
    pub index: usize,
    pub error: Error,
}

struct Partial {
    loss: f64,
    theta: Vec<f64>,
    omega: Vec<f64>,
}

fn map_params(t: &Transform) -> usize {
    t.sympnet().map_or(0, SympNetParams::n_params)
}

fn n_mu_of(points: usize, mus: &[f64]) -> usize {
    if points == 0 {
        0
    } else {
        mus.len() / points
    }
}

#[allow(clippy::too_many_arguments)]
fn head(
    model: &Model,
    term: &Term,
    k: usize,
    x: [f64; 2],
    mu: &[f64],
    y: [f64; 2],
    jac: &Mat2,
    u: f64,
    g: [f64; 2],
) -> Result<(f64, [f64; HEAD]), EvalError> {
    let yv = [H::variable(y[0], 0), H::variable(y[1], 1)];
    let j = [
        [H::variable(jac[0][0], 2), H::variable(jac[0][1], 3)],
        [H::variable(jac[1][0], 4), H::variable(jac[1][1], 5)],
    ];
    let uv = H::variable(u, 6);
    let gv = [H::variable(g[0], 7), H::variable(g[1], 8)];
    let w = assemble(&model.lifting, x, yv, &j, uv, gv)?;
    let d = match *term {
        Term::Energy { weight } => energy_density(&w, &j, model.source.eval(yv, mu)) * weight,
        Term::Robin {
            kappa,
            scale,
            normals,
        } => robin_density(w.value, &j, normals[k].normal) * (kappa.value(mu) * scale),
        Term::Penalty { c, weight } => penalty_density(&w, &j, c) * weight,
    };
    Ok((d.value, d.grad))
}

/// One batch: map forward, field forward, head, field backward, map backward.
fn chunk(
    model: &Model,
    term: &Term,
    offset: usize,
    xs: &[[f64; 2]],
    mus: &[f64],
    n_mu: usize,
    want_grad: bool,
) -> Result<Partial, PointFailure> {
    let fail = |i: usize, error: Error| PointFailure {
        term: term.name(),
        index: offset + i,
        error,
    };
    let n = xs.len();
    let mu_of = |i: usize| &mus[i * n_mu..(i + 1) * n_mu];
    let mut ys = Vec::with_capacity(n);
    let mut jacs = Vec::with_capacity(n);
    for (i, &x) in xs.iter().enumerate() {
        let (y, j) = model
            .transform
            .map_jac(x, mu_of(i))
            .map_err(|e| fail(i, e))?;
        ys.push(y);
        jacs.push(j);
    }
    let trace = model.field.forward_batch(&ys, mus);
    let mut loss = 0.0;
    let mut ubar = vec![0.0; n];
    let mut gbar = vec![[0.0; 2]; n];
    let mut ybar = vec![[0.0; 2]; n];
    let mut jbar = vec![[[0.0; 2]; 2]; n];
    for i in 0..n {
        let (v, d) = head(
            model,
            term,
            offset + i,
            xs[i],
            mu_of(i),
            ys[i],
            &jacs[i],
            trace.u(i),
            trace.grad(i),
        )
        .map_err(|e| fail(i, e.into()))?;
        if !v.is_finite() || d.iter().any(|g| !g.is_finite()) {
            return Err(fail(
                i,
                Error::Degenerate(format!("non-finite integrand {v}")),
            ));
        }
        loss += v;
        ybar[i] = [d[0], d[1]];
        jbar[i] = [[d[2], d[3]], [d[4], d[5]]];
        ubar[i] = d[6];
        gbar[i] = [d[7], d[8]];
    }
    let mut theta = Vec::new();
    let mut omega = Vec::new();
    if want_grad {
        theta = vec![0.0; model.field.n_params()];
        model
            .field
            .backward_batch(&trace, &ubar, &gbar, &mut theta, &mut ybar);
        if let Transform::Learned(net) = model.transform {
            omega = vec![0.0; net.n_params()];
            for i in 0..n {
                net.backward_point(xs[i], mu_of(i), ybar[i], jbar[i], &mut omega);
            }
        }
    }
    Ok(Partial { loss, theta, omega })
}

/// Sums a term over all points in fixed-size chunks, evaluated in parallel
/// and reduced in chunk order.
fn run_term(
    model: &Model,
    term: Term,
    xs: &[[f64; 2]],
    mus: &[f64],
    want_grad: bool,
) -> Result<Partial, PointFailure> {
    let n = xs.len();
    let n_mu = n_mu_of(n, mus);
    let parts: Vec<Result<Partial, PointFailure>> = (0..n.div_ceil(BATCH))
        .into_par_iter()
        .map(|c| {
            let lo = c * BATCH;
            let hi = (lo + BATCH).min(n);
            chunk(
                model,
                &term,
                lo,
                &xs[lo..hi],
                &mus[lo * n_mu..hi * n_mu],
                n_mu,
                want_grad,
            )
        })
        .collect();
    let mut total = Partial {
        loss: 0.0,
        theta: if want_grad {
            vec![0.0; model.field.n_params()]
        } else {
            Vec::new()
        },
        omega: if want_grad {
            vec![0.0; map_params(model.transform)]
        } else {
            Vec::new()
        },
    };
    for p in parts {
        let p = p?;
        total.loss += p.loss;
        for (a, b) in total.theta.iter_mut().zip(&p.theta) {
            *a += b;
        }
        for (a, b) in total.omega.iter_mut().zip(&p.omega) {
            *a += b;
        }
    }
    Ok(total)
}

fn boundary_term<'a>(t: BoundaryTerm, samples: &'a [BoundarySample]) -> Term<'a> {
    match t {
        BoundaryTerm::Robin { kappa, scale } => Term::Robin {
            kappa,
            scale,
            normals: samples,
        },
        BoundaryTerm::Penalty { c, weight } => Term::Penalty { c, weight },
    }
}

pub(crate) fn loss_and_grad_detailed(
    model: &Model,
    pts: &Collocation,
    want_grad: bool,
) -> Result<LossGrad, PointFailure> {
    let interior = run_term(
        model,
        Term::Energy {
            weight: pts.interior_weight,
        },
        &pts.interior,
        &pts.interior_mu,
        want_grad,
    )?;
    let mut out = LossGrad {
        loss: interior.loss,
        interior: interior.loss,
        boundary: 0.0,
        theta: interior.theta,
        omega: interior.omega,
    };
    if let Some(t) = pts.boundary_term {
        if !pts.boundary.is_empty() {
            let xs: Vec<[f64; 2]> = pts.boundary.iter().map(|b| b.x).collect();
            let b = run_term(
                model,
                boundary_term(t, &pts.boundary),
                &xs,
                &pts.boundary_mu,
                want_grad,
            )?;
            out.boundary = b.loss;
            out.loss += b.loss;
            for (a, v) in out.theta.iter_mut().zip(&b.theta) {
                *a += v;
            }
            for (a, v) in out.omega.iter_mut().zip(&b.omega) {
                *a += v;
            }
        }
    }
    Ok(out)
}

/// Loss value and, if requested, its gradient with respect to the field
/// and map parameters.
pub fn loss_and_grad(model: &Model, pts: &Collocation, want_grad: bool) -> Result<LossGrad> {
    loss_and_grad_detailed(model, pts, want_grad).map_err(|f| f.error)
}

/// Lifted field, map Jacobian and image point by direct composition of the
/// generic models.
fn compose<S: Real>(
    model: &Model,
    theta: &[Dual2<S>],
    omega: &[Dual2<S>],
    x: [f64; 2],
    mu: &[f64],
) -> Result<(Dual2<S>, [[S; 2]; 2], [S; 2]), EvalError> {
    let xd = Dual2::seed([S::cst(x[0]), S::cst(x[1])]);
    let mud: Vec<Dual2<S>> = mu.iter().map(|&m| Dual2::constant(S::cst(m))).collect();
    let yd = match model.transform {
        Transform::Identity => xd,
        Transform::Benchmark { lambda } => benchmark_map(xd, lambda.value(mu)),
        Transform::Learned(net) => net.apply_generic(omega, xd, &mud),
    };
    let u = model.field.forward_generic(theta, yd, &mud);
    let w = model.lifting.combine(xd, yd, u)?;
    let jac = [yd[0].grad, yd[1].grad];
    Ok((w, jac, [yd[0].value, yd[1].value]))
}

fn loss_generic<S: Real>(
    model: &Model,
    pts: &Collocation,
    theta: &[S],
    omega: &[S],
) -> Result<S, EvalError> {
    let th: Vec<Dual2<S>> = theta.iter().map(|&q| Dual2::constant(q)).collect();
    let om: Vec<Dual2<S>> = omega.iter().map(|&q| Dual2::constant(q)).collect();
    let mut acc = S::zero();
    let n_mu = n_mu_of(pts.interior.len(), &pts.interior_mu);
    for (i, &x) in pts.interior.iter().enumerate() {
        let mu = &pts.interior_mu[i * n_mu..(i + 1) * n_mu];
        let (w, jac, y) = compose(model, &th, &om, x, mu)?;
        acc = acc + energy_density(&w, &jac, model.source.eval(y, mu)) * pts.interior_weight;
    }
    if let Some(t) = pts.boundary_term {
        let n_mu = n_mu_of(pts.boundary.len(), &pts.boundary_mu);
        for (i, b) in pts.boundary.iter().enumerate() {
            let mu = &pts.boundary_mu[i * n_mu..(i + 1) * n_mu];
            let (w, jac, _) = compose(model, &th, &om, b.x, mu)?;
            acc = acc
                + match t {
                    BoundaryTerm::Robin { kappa, scale } => {
                        robin_density(w.value, &jac, b.normal) * (kappa.value(mu) * scale)
                    }
                    BoundaryTerm::Penalty { c, weight } => penalty_density(&w, &jac, c) * weight,
                };
        }
    }
    Ok(acc)
}

/// Loss value through the generic models in plain floating point.
pub fn loss_value_direct(model: &Model, pts: &Collocation) -> Result<f64> {
    let omega = model
        .transform
        .sympnet()
        .map_or(&[][..], SympNetParams::params);
    Ok(loss_generic(model, pts, model.field.params(), omega)?)
}

/// Loss and gradient by reverse accumulation over the generic composition.
pub fn loss_and_grad_tape(model: &Model, pts: &Collocation) -> Result<LossGrad> {
    let theta = model.field.params();
    let omega = model
        .transform
        .sympnet()
        .map_or(&[][..], SympNetParams::params);
    let nt = theta.len();
    let all = [theta, omega].concat();
    let (loss, g) = loss_param_gradient(&all, |p| loss_generic(model, pts, &p[..nt], &p[nt..]))?;
    Ok(LossGrad {
        loss,
        interior: f64::NAN,
        boundary: f64::NAN,
        theta: g[..nt].to_vec(),
        omega: g[nt..].to_vec(),
    })
}

/// Replays the failing point on the tape to name the first non-finite
/// primitive.
pub(crate) fn diagnose(model: &Model, pts: &Collocation, failure: &PointFailure) -> String {
    let mut single = Collocation {
        interior_weight: pts.interior_weight,
        boundary_term: pts.boundary_term,
        ..Default::default()
    };
    let i = failure.index;
    if failure.term == "interior energy" {
        let n_mu = n_mu_of(pts.interior.len(), &pts.interior_mu);
        single.interior.push(pts.interior[i]);
        single.interior_mu = pts.interior_mu[i * n_mu..(i + 1) * n_mu].to_vec();
        single.boundary_term = None;
    } else {
        let n_mu = n_mu_of(pts.boundary.len(), &pts.boundary_mu);
        single.boundary.push(pts.boundary[i]);
        single.boundary_mu = pts.boundary_mu[i * n_mu..(i + 1) * n_mu].to_vec();
    }
    let site = format!("{} term at point {i}", failure.term);
    match loss_and_grad_tape(model, &single) {
        Err(e) => format!("{site}: {e}"),
        Ok(_) => format!("{site}: {}", failure.error),
    }
}

/// Circumference of the disk of area `volume`.
pub fn circumference(volume: f64) -> f64 {
    2.0 * (PI * volume).sqrt()
}

/// `(V0/N) sum [|grad v|^2/2 - f v]` on the reference domain.
pub fn loss_deepritz(
    field: &FieldNetParams,
    lifting: &Lifting,
    spec: &ProblemSpec,
    points: &[[f64; 2]],
    mus: &[f64],
) -> Result<f64> {
    let model = Model {
        field,
        transform: &Transform::Identity,
        lifting: *lifting,
        source: spec.source,
    };
    loss_and_grad(&model, &interior_only(spec, points, mus), false).map(|l| l.loss)
}

fn interior_only(spec: &ProblemSpec, points: &[[f64; 2]], mus: &[f64]) -> Collocation {
    Collocation {
        interior: points.to_vec(),
        interior_mu: mus.to_vec(),
        interior_weight: spec.volume() / points.len().max(1) as f64,
        ..Default::default()
    }
}

/// Dirichlet energy of the lifted field on the domain mapped by `transform`.
pub fn loss_joint_dirichlet(
    field: &FieldNetParams,
    transform: &Transform,
    spec: &ProblemSpec,
    points: &[[f64; 2]],
    mus: &[f64],
) -> Result<f64> {
    let model = Model {
        field,
        transform,
        lifting: spec.lifting(),
        source: spec.source,
    };
    loss_and_grad(&model, &interior_only(spec, points, mus), false).map(|l| l.loss)
}

/// Collocation for the Robin energy: the interior energy plus
/// `kappa (2 sqrt(pi V0) / N_b) sum |J^{-T} n| v^2 / 2`.
pub fn robin_collocation(
    spec: &ProblemSpec,
    interior: &[[f64; 2]],
    mus: &[f64],
    boundary: &[BoundarySample],
    boundary_mus: &[f64],
) -> Result<Collocation> {
    let BoundaryCondition::Robin { kappa } = spec.bc else {
        return Err(Error::Argument("Robin loss needs a Robin problem".into()));
    };
    let mut c = interior_only(spec, interior, mus);
    c.boundary = boundary.to_vec();
    c.boundary_mu = boundary_mus.to_vec();
    c.boundary_term = Some(BoundaryTerm::Robin {
        kappa,
        scale: circumference(spec.volume()) / boundary.len().max(1) as f64,
    });
    Ok(c)
}

pub fn loss_joint_robin(
    field: &FieldNetParams,
    transform: &Transform,
    spec: &ProblemSpec,
    interior: &[[f64; 2]],
    mus: &[f64],
    boundary: &[BoundarySample],
    boundary_mus: &[f64],
) -> Result<f64> {
    let model = Model {
        field,
        transform,
        lifting: Lifting::Identity,
        source: spec.source,
    };
    let c = robin_collocation(spec, interior, mus, boundary, boundary_mus)?;
    loss_and_grad(&model, &c, false).map(|l| l.loss)
}

/// Collocation for the Bernoulli energy `(V0/N_drawn) sum |grad v|^2 / 2`
/// over the points kept after masking, plus the boundary penalty when
/// `penalty_weight` is given.
pub fn bernoulli_collocation(
    spec: &ProblemSpec,
    kept: &[[f64; 2]],
    n_drawn: usize,
    boundary: &[BoundarySample],
    penalty_weight: Option<f64>,
) -> Result<Collocation> {
    let BoundaryCondition::Bernoulli { c, .. } = spec.bc else {
        return Err(Error::Argument(
            "Bernoulli loss needs a Bernoulli problem".into(),
        ));
    };
    let mut col = Collocation {
        interior: kept.to_vec(),
        interior_weight: spec.volume() / n_drawn.max(1) as f64,
        ..Default::default()
    };
    if let Some(weight) = penalty_weight {
        col.boundary = boundary.to_vec();
        col.boundary_term = Some(BoundaryTerm::Penalty { c, weight });
    }
    Ok(col)
}

pub fn loss_bernoulli(
    field: &FieldNetParams,
    transform: &Transform,
    spec: &ProblemSpec,
    kept: &[[f64; 2]],
    n_drawn: usize,
    boundary: &[BoundarySample],
    penalty_weight: Option<f64>,
) -> Result<f64> {
    let model = Model {
        field,
        transform,
        lifting: spec.lifting(),
        source: Source::Zero,
    };
    let c = bernoulli_collocation(spec, kept, n_drawn, boundary, penalty_weight)?;
    loss_and_grad(&model, &c, false).map(|l| l.loss)
}

/// Mean squared distance between `T_omega(x; mu)` and `target(x; mu)` and
/// its gradient with respect to the map parameters.
pub fn matching_mean_grad(
    net: &SympNetParams,
    target: &Transform,
    xs: &[[f64; 2]],
    mus: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n = xs.len();
    if n == 0 {
        return Err(Error::Argument(
            "matching loss needs at least one point".into(),
        ));
    }
    let n_mu = n_mu_of(n, mus);
    let scale = 1.0 / n as f64;
    let parts: Vec<Result<(f64, Vec<f64>)>> = (0..n.div_ceil(BATCH))
        .into_par_iter()
        .map(|c| {
            let lo = c * BATCH;
            let hi = (lo + BATCH).min(n);
            let mut g = vec![0.0; net.n_params()];
            let mut acc = 0.0;
            for i in lo..hi {
                let mu = &mus[i * n_mu..(i + 1) * n_mu];
                let y = net.apply(xs[i], mu)?;
                let t = target.apply(xs[i], mu)?;
                let d = [y[0] - t[0], y[1] - t[1]];
                acc += (d[0] * d[0] + d[1] * d[1]) * scale;
                net.backward_point(
                    xs[i],
                    mu,
                    [2.0 * scale * d[0], 2.0 * scale * d[1]],
                    [[0.0; 2]; 2],
                    &mut g,
                );
            }
            Ok((acc, g))
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; net.n_params()];
    for p in parts {
        let (l, g) = p?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldnet::Activation;
    use crate::geometry::{sample_boundary, sample_interior, Obstacle, ReferenceDomain};
    use crate::problems::{ExactSolution, ParameterSpace};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn dirichlet_spec() -> ProblemSpec {
        ProblemSpec {
            bc: BoundaryCondition::Dirichlet,
            source: Source::Constant {
                value: Param::Fixed(1.0),
            },
            domain: ReferenceDomain::Disk { radius: 1.0 },
            mu_space: ParameterSpace::default(),
        }
    }

    fn robin_spec() -> ProblemSpec {
        ProblemSpec {
            bc: BoundaryCondition::Robin {
                kappa: Param::Fixed(1.0),
            },
            ..dirichlet_spec()
        }
    }

    fn bernoulli_spec() -> ProblemSpec {
        ProblemSpec {
            bc: BoundaryCondition::Bernoulli {
                c: 1.0 / 2f64.ln(),
                obstacle: Obstacle { a: 0.5, b: 0.5 },
            },
            source: Source::Zero,
            ..dirichlet_spec()
        }
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (k, (x, y)) in a.iter().zip(b).enumerate() {
            assert!(
                (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())),
                "entry {k}: {x} vs {y}"
            );
        }
    }

    #[test]
    fn shear_enters_quadratic_form() {
        // J = [[1, s], [0, 1]] gives A = J^-1 J^-T = [[1 + s^2, -s], [-s, 1]].
        let s = 0.7;
        let j = [[1.0, s], [0.0, 1.0]];
        let w = Dual2::new(0.0, [0.3, -1.1]);
        let a = [[1.0 + s * s, -s], [-s, 1.0]];
        let g = w.grad;
        let quad = 0.5
            * (g[0] * (a[0][0] * g[0] + a[0][1] * g[1]) + g[1] * (a[1][0] * g[0] + a[1][1] * g[1]));
        assert!((energy_density(&w, &j, 0.0) - quad).abs() < 1e-14);
    }

    #[test]
    fn zero_network_has_zero_loss() {
        let field = FieldNetParams::zeros(vec![2, 6, 1], Activation::Tanh).unwrap();
        let pts =
            sample_interior(&ReferenceDomain::Disk { radius: 1.0 }, 100, &mut rng(0)).unwrap();
        let l = loss_deepritz(
            &field,
            &Lifting::Disk { radius: 1.0 },
            &dirichlet_spec(),
            &pts,
            &[],
        )
        .unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn constant_field_leaves_only_load_term() {
        let mut field = FieldNetParams::zeros(vec![2, 4, 1], Activation::Tanh).unwrap();
        field.set_bias(2, 0, 0.8);
        let pts =
            sample_interior(&ReferenceDomain::Disk { radius: 1.0 }, 300, &mut rng(3)).unwrap();
        let l = loss_deepritz(&field, &Lifting::Identity, &dirichlet_spec(), &pts, &[]).unwrap();
        assert!((l + PI * 0.8).abs() < 1e-12);
    }

    /// Field network `c0 + c1 r^2` is impossible with tanh units, so the
    /// exact-solution check drives the head directly with exact data.
    #[test]
    fn exact_solution_energy_estimate() {
        let exact = ExactSolution::DirichletDisk {
            source: 1.0,
            radius: 1.0,
        };
        let pts =
            sample_interior(&ReferenceDomain::Disk { radius: 1.0 }, 200_000, &mut rng(5)).unwrap();
        let n = pts.len() as f64;
        let s: f64 = pts
            .iter()
            .map(|&x| {
                let w = exact.u(Dual2::seed(x), &[]);
                energy_density(&w, &[[1.0, 0.0], [0.0, 1.0]], 1.0)
            })
            .sum();
        assert!((PI / n * s + PI / 16.0).abs() < 5e-3);
    }

    #[test]
    fn identity_map_matches_deepritz_exactly() {
        let spec = dirichlet_spec();
        let field = FieldNetParams::init(&[8, 8], 0, Activation::Tanh, &mut rng(1)).unwrap();
        let pts = sample_interior(&spec.domain, 700, &mut rng(2)).unwrap();
        let a = loss_deepritz(&field, &spec.lifting(), &spec, &pts, &[]).unwrap();
        let b = loss_joint_dirichlet(&field, &Transform::Identity, &spec, &pts, &[]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let net = SympNetParams::zeros(4, 3, 0, Activation::Sigmoid).unwrap();
        let c = loss_joint_dirichlet(&field, &Transform::Learned(net), &spec, &pts, &[]).unwrap();
        assert_eq!(a.to_bits(), c.to_bits());
    }

    #[test]
    fn fast_path_matches_direct_composition() {
        let spec = dirichlet_spec();
        let field = FieldNetParams::init(&[6, 5], 0, Activation::Tanh, &mut rng(11)).unwrap();
        let net = SympNetParams::init(4, 3, 0, Activation::Sigmoid, &mut rng(12)).unwrap();
        let t = Transform::Learned(net);
        let model = Model {
            field: &field,
            transform: &t,
            lifting: spec.lifting(),
            source: spec.source,
        };
        let pts = interior_only(
            &spec,
            &sample_interior(&spec.domain, 600, &mut rng(13)).unwrap(),
            &[],
        );
        let fast = loss_and_grad(&model, &pts, false).unwrap().loss;
        let direct = loss_value_direct(&model, &pts).unwrap();
        assert!(rel_err(fast, direct) < 1e-12, "{fast} vs {direct}");
    }

    #[test]
    fn robin_boundary_under_identity_is_scaled_mean() {
        let spec = ProblemSpec {
            bc: BoundaryCondition::Robin {
                kappa: Param::Fixed(0.6),
            },
            ..dirichlet_spec()
        };
        let field = FieldNetParams::init(&[5], 0, Activation::Tanh, &mut rng(4)).unwrap();
        let b = sample_boundary(&spec.domain, 64, &mut rng(6)).unwrap();
        let c = robin_collocation(&spec, &[], &[], &b, &[]).unwrap();
        let model = Model {
            field: &field,
            transform: &Transform::Identity,
            lifting: Lifting::Identity,
            source: spec.source,
        };
        let got = loss_and_grad(&model, &c, false).unwrap().boundary;
        let mean_sq: f64 = b
            .iter()
            .map(|s| field.forward(s.x, &[]).unwrap().powi(2))
            .sum::<f64>()
            / 64.0;
        let expect = 0.6 * PI.sqrt() * mean_sq * 2.0 * 0.5 * PI.sqrt();
        assert!(rel_err(got, expect) < 1e-12, "{got} vs {expect}");
        let zero = ProblemSpec {
            bc: BoundaryCondition::Robin {
                kappa: Param::Fixed(0.0),
            },
            ..spec
        };
        let c0 = robin_collocation(&zero, &[], &[], &b, &[]).unwrap();
        assert_eq!(loss_and_grad(&model, &c0, false).unwrap().boundary, 0.0);
    }

    #[test]
    fn penalty_vanishes_at_target_slope() {
        // w = c (1 - r) on the unit circle has |grad w| = c.
        let c = 1.3;
        let x = [0.6, 0.8];
        let w = Dual2::new(0.0, [-c * x[0], -c * x[1]]);
        assert!(penalty_density(&w, &[[1.0, 0.0], [0.0, 1.0]], c).abs() < 1e-15);
    }

    /// Central-difference gradient of the fast loss.
    fn fd_grad(
        field: &FieldNetParams,
        transform: &Transform,
        lifting: Lifting,
        source: Source,
        pts: &Collocation,
    ) -> (Vec<f64>, Vec<f64>) {
        let h = 1e-6;
        let eval = |f: &FieldNetParams, t: &Transform| {
            let m = Model {
                field: f,
                transform: t,
                lifting,
                source,
            };
            loss_and_grad(&m, pts, false).unwrap().loss
        };
        let mut gt = Vec::new();
        for k in 0..field.n_params() {
            let mut f = field.clone();
            f.params_mut()[k] += h;
            let a = eval(&f, transform);
            f.params_mut()[k] -= 2.0 * h;
            let b = eval(&f, transform);
            gt.push((a - b) / (2.0 * h));
        }
        let mut go = Vec::new();
        if let Transform::Learned(net) = transform {
            for k in 0..net.n_params() {
                let mut n = net.clone();
                n.params_mut()[k] += h;
                let a = eval(field, &Transform::Learned(n.clone()));
                n.params_mut()[k] -= 2.0 * h;
                let b = eval(field, &Transform::Learned(n));
                go.push((a - b) / (2.0 * h));
            }
        }
        (gt, go)
    }

    fn check_three_routes(
        field: &FieldNetParams,
        net: SympNetParams,
        lifting: Lifting,
        source: Source,
        pts: &Collocation,
    ) {
        let t = Transform::Learned(net);
        let model = Model {
            field,
            transform: &t,
            lifting,
            source,
        };
        let fast = loss_and_grad(&model, pts, true).unwrap();
        let tape = loss_and_grad_tape(&model, pts).unwrap();
        assert!(rel_err(fast.loss, tape.loss) < 1e-12);
        close(&fast.theta, &tape.theta, 1e-10);
        close(&fast.omega, &tape.omega, 1e-10);
        let (ft, fo) = fd_grad(field, &t, lifting, source, pts);
        close(&tape.theta, &ft, 1e-4);
        close(&tape.omega, &fo, 1e-4);
    }

    #[test]
    fn dirichlet_gradients_agree() {
        let spec = dirichlet_spec();
        let field = FieldNetParams::init(&[5, 4], 0, Activation::Tanh, &mut rng(21)).unwrap();
        let net = SympNetParams::init(2, 3, 0, Activation::Sigmoid, &mut rng(22)).unwrap();
        let pts = interior_only(
            &spec,
            &sample_interior(&spec.domain, 32, &mut rng(23)).unwrap(),
            &[],
        );
        check_three_routes(&field, net, spec.lifting(), spec.source, &pts);
    }

    #[test]
    fn parametric_robin_gradients_agree() {
        let spec = ProblemSpec {
            bc: BoundaryCondition::Robin {
                kappa: Param::FromMu { mu: 0 },
            },
            mu_space: ParameterSpace(vec![[0.5, 1.5]]),
            ..robin_spec()
        };
        let mut r = rng(31);
        let field = FieldNetParams::init(&[5, 4], 1, Activation::Tanh, &mut r).unwrap();
        let net = SympNetParams::init(2, 3, 1, Activation::Sigmoid, &mut r).unwrap();
        let xs = sample_interior(&spec.domain, 32, &mut r).unwrap();
        let mus = spec.mu_space.sample_many(32, &mut r);
        let b = sample_boundary(&spec.domain, 16, &mut r).unwrap();
        let bm = spec.mu_space.sample_many(16, &mut r);
        let pts = robin_collocation(&spec, &xs, &mus, &b, &bm).unwrap();
        check_three_routes(&field, net, Lifting::Identity, spec.source, &pts);
    }

    #[test]
    fn bernoulli_gradients_agree() {
        let spec = bernoulli_spec();
        let mut r = rng(41);
        let field = FieldNetParams::init(&[5, 4], 0, Activation::Tanh, &mut r).unwrap();
        let net = SympNetParams::init(2, 3, 0, Activation::Sigmoid, &mut r).unwrap();
        let xs = sample_interior(&spec.domain, 48, &mut r).unwrap();
        let kept: Vec<[f64; 2]> = xs
            .iter()
            .copied()
            .filter(|x| x[0].hypot(x[1]) > 0.6)
            .collect();
        let b = sample_boundary(&spec.domain, 16, &mut r).unwrap();
        let pts = bernoulli_collocation(&spec, &kept, xs.len(), &b, Some(1.0)).unwrap();
        check_three_routes(&field, net, spec.lifting(), Source::Zero, &pts);
    }

    #[test]
    fn many_chunks_reduce_like_one() {
        let spec = dirichlet_spec();
        let field = FieldNetParams::init(&[6], 0, Activation::Tanh, &mut rng(51)).unwrap();
        let net = SympNetParams::init(2, 3, 0, Activation::Sigmoid, &mut rng(52)).unwrap();
        let t = Transform::Learned(net);
        let model = Model {
            field: &field,
            transform: &t,
            lifting: spec.lifting(),
            source: spec.source,
        };
        let pts = interior_only(
            &spec,
            &sample_interior(&spec.domain, 3 * BATCH + 17, &mut rng(53)).unwrap(),
            &[],
        );
        let a = loss_and_grad(&model, &pts, true).unwrap();
        let tape = loss_and_grad_tape(&model, &pts).unwrap();
        assert!(rel_err(a.loss, tape.loss) < 1e-12);
        close(&a.theta, &tape.theta, 1e-10);
        close(&a.omega, &tape.omega, 1e-10);
        let b = loss_and_grad(&model, &pts, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matching_gradient_matches_differences() {
        let target = Transform::Benchmark {
            lambda: Param::FromMu { mu: 0 },
        };
        let mut r = rng(61);
        let net = SympNetParams::init(2, 3, 1, Activation::Sigmoid, &mut r).unwrap();
        let xs = sample_interior(&ReferenceDomain::Disk { radius: 1.0 }, 40, &mut r).unwrap();
        let mus = ParameterSpace(vec![[0.5, 2.0]]).sample_many(40, &mut r);
        let (_, g) = matching_mean_grad(&net, &target, &xs, &mus).unwrap();
        let h = 1e-6;
        for k in 0..net.n_params() {
            let mut n = net.clone();
            n.params_mut()[k] += h;
            let a = matching_mean_grad(&n, &target, &xs, &mus).unwrap().0;
            n.params_mut()[k] -= 2.0 * h;
            let b = matching_mean_grad(&n, &target, &xs, &mus).unwrap().0;
            let fd = (a - b) / (2.0 * h);
            assert!(
                (g[k] - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                "param {k}: {} vs {fd}",
                g[k]
            );
        }
    }

    #[test]
    fn non_finite_point_is_diagnosed() {
        let spec = dirichlet_spec();
        let mut field = FieldNetParams::init(&[4], 0, Activation::Tanh, &mut rng(71)).unwrap();
        field.params_mut()[0] = f64::NAN;
        let model = Model {
            field: &field,
            transform: &Transform::Identity,
            lifting: spec.lifting(),
            source: spec.source,
        };
        let pts = interior_only(&spec, &[[0.1, 0.2], [0.3, 0.0]], &[]);
        let f = loss_and_grad_detailed(&model, &pts, true).unwrap_err();
        assert_eq!(f.index, 0);
        let msg = diagnose(&model, &pts, &f);
        assert!(msg.contains("interior energy term at point 0"), "{msg}");
        assert!(msg.contains("non-finite"), "{msg}");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn identity_map_reduces_to_deepritz(seed in any::<u64>(), n in 1usize..600) {
                let spec = dirichlet_spec();
                let mut r = rng(seed);
                let field = FieldNetParams::init(&[6, 5], 0, Activation::Tanh, &mut r).unwrap();
                let pts = sample_interior(&spec.domain, n, &mut r).unwrap();
                let a = loss_deepritz(&field, &spec.lifting(), &spec, &pts, &[]).unwrap();
                let b = loss_joint_dirichlet(&field, &Transform::Identity, &spec, &pts, &[]).unwrap();
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
