//! Problem catalogue, closed-form solutions and diagnostics.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Dual2, Jet, Real};
use crate::error::{Error, Result};
use crate::fieldnet::{FieldNetParams, Lifting};
use crate::geometry::{
    apply_inv_transpose, boundary_curvature, BoundarySample, Obstacle, ReferenceDomain,
};
use crate::sympnet::{Mat2, SympNetParams, IDENTITY};

/// Scalar that is either fixed or read from the problem parameters `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Fixed(f64),
    FromMu { mu: usize },
}

impl Param {
    pub fn value(&self, mu: &[f64]) -> f64 {
        match *self {
            Param::Fixed(v) => v,
            Param::FromMu { mu: i } => mu[i],
        }
    }

    fn check(&self, n_mu: usize) -> Result<()> {
        match *self {
            Param::FromMu { mu } if mu >= n_mu => Err(Error::Config(format!(
                "parameter index {mu} outside a {n_mu}-dimensional parameter space"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    Constant {
        value: Param,
    },
    /// `exp(1 - (y1/mu)^2 - (mu y2)^2)`.
    EllipseExp {
        mu: Param,
    },
    /// `exp(1 - |T_lambda(y)|^2)` with the benchmark map.
    ComposedExp {
        lambda: Param,
    },
    Zero,
}

impl Source {
    pub fn eval<S: Real>(&self, y: [S; 2], mu: &[f64]) -> S {
        match self {
            Source::Constant { value } => S::cst(value.value(mu)),
            Source::EllipseExp { mu: m } => {
                let m = m.value(mu);
                let a = y[0] * (1.0 / m);
                let b = y[1] * m;
                (-(a * a) - b * b + 1.0).exp()
            }
            Source::ComposedExp { lambda } => {
                let t = benchmark_map(y, lambda.value(mu));
                (-(t[0] * t[0]) - t[1] * t[1] + 1.0).exp()
            }
            Source::Zero => S::zero(),
        }
    }

    fn check(&self, n_mu: usize) -> Result<()> {
        match self {
            Source::Constant { value: p }
            | Source::EllipseExp { mu: p }
            | Source::ComposedExp { lambda: p } => p.check(n_mu),
            Source::Zero => Ok(()),
        }
    }
}

/// `T_lambda = S1 o S2` with
/// `S2(x) = (x1, x2 + 0.2 lambda x1 + 0.12 cos x1)` and
/// `S1(x) = (x1 - lambda x2^2 + 0.3 sin(x2/lambda) - 0.2 sin(8 x2), x2)`.
pub fn benchmark_map<S: Real>(x: [S; 2], lambda: f64) -> [S; 2] {
    let x2 = x[1] + x[0] * (0.2 * lambda) + x[0].cos() * 0.12;
    let x1 = x[0] - x2 * x2 * lambda + (x2 * (1.0 / lambda)).sin() * 0.3 - (x2 * 8.0).sin() * 0.2;
    [x1, x2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryCondition {
    Dirichlet,
    Robin {
        kappa: Param,
    },
    /// Exterior free-boundary problem around an elliptic obstacle.
    Bernoulli {
        c: f64,
        obstacle: Obstacle,
    },
}

/// Box in parameter space.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterSpace(pub Vec<[f64; 2]>);

impl ParameterSpace {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn volume(&self) -> f64 {
        self.0.iter().map(|r| r[1] - r[0]).product()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.0
            .iter()
            .map(|r| {
                if r[1] > r[0] {
                    rng.random_range(r[0]..r[1])
                } else {
                    r[0]
                }
            })
            .collect()
    }

    /// `n` draws, point-major.
    pub fn sample_many<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(n * self.dim());
        for _ in 0..n {
            out.extend(self.sample(rng));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub bc: BoundaryCondition,
    pub source: Source,
    pub domain: ReferenceDomain,
    #[serde(default)]
    pub mu_space: ParameterSpace,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        for r in &self.mu_space.0 {
            if !(r[0] <= r[1]) {
                return Err(Error::Config(format!("empty parameter range {r:?}")));
            }
        }
        let n_mu = self.mu_space.dim();
        self.source.check(n_mu)?;
        match self.bc {
            BoundaryCondition::Robin { kappa } => {
                kappa.check(n_mu)?;
                let positive = match kappa {
                    Param::Fixed(k) => k > 0.0,
                    Param::FromMu { mu } => self.mu_space.0[mu][0] > 0.0,
                };
                if !positive {
                    return Err(Error::Config("Robin coefficient must be positive".into()));
                }
            }
            BoundaryCondition::Bernoulli { c, obstacle } => {
                if !(c > 0.0) {
                    return Err(Error::Config("Bernoulli constant must be positive".into()));
                }
                if !(obstacle.a > 0.0 && obstacle.b > 0.0) {
                    return Err(Error::Config("obstacle half-axes must be positive".into()));
                }
            }
            BoundaryCondition::Dirichlet => {}
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.domain.area()
    }

    pub fn lifting(&self) -> Lifting {
        match (self.bc, self.domain) {
            (BoundaryCondition::Robin { .. }, _) => Lifting::Identity,
            (BoundaryCondition::Bernoulli { obstacle, .. }, d) => Lifting::Bernoulli {
                a: obstacle.a,
                b: obstacle.b,
                radius: d.radius(),
            },
            (BoundaryCondition::Dirichlet, ReferenceDomain::Disk { radius }) => {
                Lifting::Disk { radius }
            }
            (BoundaryCondition::Dirichlet, ReferenceDomain::Annulus { r_min, r_max }) => {
                Lifting::Annulus { r_min, r_max }
            }
        }
    }
}

/// Fixed or learned domain map applied to the reference domain.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Identity,
    Benchmark { lambda: Param },
    Learned(SympNetParams),
}

impl Transform {
    pub fn map_jac(&self, x: [f64; 2], mu: &[f64]) -> Result<([f64; 2], Mat2)> {
        match self {
            Transform::Identity => Ok((x, IDENTITY)),
            Transform::Benchmark { lambda } => {
                let y = benchmark_map(Dual2::seed(x), lambda.value(mu));
                Ok(([y[0].value, y[1].value], [y[0].grad, y[1].grad]))
            }
            Transform::Learned(net) => net.forward_with_jacobian(x, mu),
        }
    }

    pub fn apply(&self, x: [f64; 2], mu: &[f64]) -> Result<[f64; 2]> {
        Ok(self.map_jac(x, mu)?.0)
    }

    /// Map parameters for [`SympNetParams::apply`] (the learned map sees `mu`).
    pub fn sympnet(&self) -> Option<&SympNetParams> {
        match self {
            Transform::Learned(n) => Some(n),
            _ => None,
        }
    }
}

/// Closed-form optimal solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactSolution {
    /// `-Lap u = f` with constant `f`, `u = 0` on the circle of `radius`.
    DirichletDisk { source: f64, radius: f64 },
    /// `-Lap u = f`, `du/dn + kappa u = 0` on the circle of `radius`.
    RobinDisk {
        source: f64,
        kappa: Param,
        radius: f64,
    },
    /// Harmonic in `inner < r < outer`, one on the inner circle, zero on the outer.
    BernoulliAnnulus { inner: f64, outer: f64 },
}

/// Radius `R > a` with `R ln(R/a) = 1/c`, by bisection.
pub fn bernoulli_radius(a: f64, c: f64) -> f64 {
    let g = |r: f64| r * (r / a).ln() - 1.0 / c;
    let mut lo = a;
    let mut hi = 2.0 * a;
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Closed-form solution for `spec`, when one is known.
pub fn exact_oracle(spec: &ProblemSpec) -> Option<ExactSolution> {
    let ReferenceDomain::Disk { radius } = spec.domain else {
        return None;
    };
    let constant = match spec.source {
        Source::Constant {
            value: Param::Fixed(v),
        } => Some(v),
        _ => None,
    };
    match spec.bc {
        BoundaryCondition::Dirichlet => {
            constant.map(|source| ExactSolution::DirichletDisk { source, radius })
        }
        BoundaryCondition::Robin { kappa } => constant.map(|source| ExactSolution::RobinDisk {
            source,
            kappa,
            radius,
        }),
        BoundaryCondition::Bernoulli { c, obstacle } => {
            if obstacle.a != obstacle.b || !matches!(spec.source, Source::Zero) {
                return None;
            }
            Some(ExactSolution::BernoulliAnnulus {
                inner: obstacle.a,
                outer: bernoulli_radius(obstacle.a, c),
            })
        }
    }
}

impl ExactSolution {
    pub fn u<S: Real>(&self, y: [S; 2], mu: &[f64]) -> S {
        let r2 = y[0] * y[0] + y[1] * y[1];
        match *self {
            ExactSolution::DirichletDisk { source, radius } => {
                (-r2 + radius * radius) * (source / 4.0)
            }
            ExactSolution::RobinDisk {
                source,
                kappa,
                radius,
            } => {
                let k = kappa.value(mu);
                -r2 * (source / 4.0) + source * radius / (2.0 * k) + source * radius * radius / 4.0
            }
            ExactSolution::BernoulliAnnulus { inner, outer } => {
                // ln(R/r) = ln R - ln(r^2)/2
                (-(r2.ln() * 0.5) + outer.ln()) * (1.0 / (outer / inner).ln())
            }
        }
    }

    /// Radius of the optimal disk (outer boundary).
    pub fn optimal_radius(&self) -> f64 {
        match *self {
            ExactSolution::DirichletDisk { radius, .. }
            | ExactSolution::RobinDisk { radius, .. } => radius,
            ExactSolution::BernoulliAnnulus { outer, .. } => outer,
        }
    }

    /// Whether the optimum is only determined up to translation.
    pub fn translation_invariant(&self) -> bool {
        !matches!(self, ExactSolution::BernoulliAnnulus { .. })
    }

    /// Source term of the state equation.
    pub fn source(&self) -> f64 {
        match *self {
            ExactSolution::DirichletDisk { source, .. }
            | ExactSolution::RobinDisk { source, .. } => source,
            ExactSolution::BernoulliAnnulus { .. } => 0.0,
        }
    }

    /// Optimal value of the energy functional.
    pub fn energy(&self, mu: &[f64]) -> Option<f64> {
        match *self {
            ExactSolution::DirichletDisk {
                source: c,
                radius: r,
            } => Some(-PI * c * c * r.powi(4) / 16.0),
            ExactSolution::RobinDisk {
                source: c,
                kappa,
                radius: r,
            } => {
                let k = kappa.value(mu);
                let a = c * r / (2.0 * k) + c * r * r / 4.0;
                let grad = PI * c * c * r.powi(4) / 16.0;
                let ub = c * r / (2.0 * k);
                let boundary = 0.5 * k * 2.0 * PI * r * ub * ub;
                let load = c * (a * PI * r * r - c * PI * r.powi(4) / 8.0);
                Some(grad + boundary - load)
            }
            ExactSolution::BernoulliAnnulus { inner, outer } => Some(PI / (outer / inner).ln()),
        }
    }

    /// `|Lap u + f|` at `y`, through second-order dual numbers.
    pub fn pde_residual(&self, y: [f64; 2], mu: &[f64]) -> f64 {
        let u = self.u(Dual2::seed_second_order(y), mu);
        (u.laplacian().unwrap() + self.source()).abs()
    }

    /// Boundary-condition defect at a point of the optimal outer circle.
    pub fn boundary_residual(&self, t: f64, mu: &[f64]) -> f64 {
        let r = self.optimal_radius();
        let y = [r * t.cos(), r * t.sin()];
        let u = self.u(Dual2::seed(y), mu);
        let dn = u.grad[0] * t.cos() + u.grad[1] * t.sin();
        match *self {
            ExactSolution::DirichletDisk { .. } | ExactSolution::BernoulliAnnulus { .. } => {
                u.value.abs()
            }
            ExactSolution::RobinDisk { kappa, .. } => (dn + kappa.value(mu) * u.value).abs(),
        }
    }
}

/// The lifted field `w` at one reference point together with the map data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEval {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub jac: Mat2,
    /// Value and reference-space gradient of `w = v o T`.
    pub w: Jet,
}

impl PointEval {
    /// Gradient of the physical field at `y`: `J^{-T} grad w`.
    pub fn physical_grad(&self) -> [f64; 2] {
        apply_inv_transpose(&self.jac, self.w.grad)
    }
}

/// Assembles the lifted value from the network output `(u, g)` at `y = T(x)`.
pub fn lift_point(lifting: &Lifting, x: [f64; 2], y: [f64; 2], jac: Mat2, u: Jet) -> Result<Jet> {
    let g = u.grad;
    let ud = Dual2::new(
        u.value,
        [
            jac[0][0] * g[0] + jac[1][0] * g[1],
            jac[0][1] * g[0] + jac[1][1] * g[1],
        ],
    );
    let yd = [Dual2::new(y[0], jac[0]), Dual2::new(y[1], jac[1])];
    Ok(lifting.combine(Dual2::seed(x), yd, ud)?)
}

/// Network solution `v = alpha (u o T) + beta` on a (possibly learned) domain.
#[derive(Debug, Clone, Copy)]
pub struct Solution<'a> {
    pub field: &'a FieldNetParams,
    pub lifting: Lifting,
    pub transform: &'a Transform,
}

impl Solution<'_> {
    /// Evaluates `w` at reference points; `mus` is point-major.
    pub fn eval_points(&self, xs: &[[f64; 2]], mus: &[f64]) -> Result<Vec<PointEval>> {
        let n_mu = if xs.is_empty() {
            0
        } else {
            mus.len() / xs.len()
        };
        let mut ys = Vec::with_capacity(xs.len());
        let mut jacs = Vec::with_capacity(xs.len());
        for (i, &x) in xs.iter().enumerate() {
            let (y, j) = self.transform.map_jac(x, &mus[i * n_mu..(i + 1) * n_mu])?;
            ys.push(y);
            jacs.push(j);
        }
        let us = self.field.eval_many(&ys, mus)?;
        xs.iter()
            .zip(ys.iter().zip(jacs.iter().zip(us)))
            .map(|(&x, (&y, (&jac, u)))| {
                Ok(PointEval {
                    x,
                    y,
                    jac,
                    w: lift_point(&self.lifting, x, y, jac, u)?,
                })
            })
            .collect()
    }

    /// Evaluates `w` at `n` evenly spaced points of the reference circle.
    pub fn eval_boundary(&self, radius: f64, ts: &[f64], mu: &[f64]) -> Result<Vec<PointEval>> {
        let xs: Vec<[f64; 2]> = ts
            .iter()
            .map(|&t| BoundarySample::on_circle(radius, t).x)
            .collect();
        let mus: Vec<f64> = xs.iter().flat_map(|_| mu.iter().copied()).collect();
        self.eval_points(&xs, &mus)
    }
}

/// Evaluates the exact solution pulled back through `transform`, shifted by
/// `center` in physical space.
pub fn exact_points(
    exact: &ExactSolution,
    transform: &Transform,
    xs: &[[f64; 2]],
    mus: &[f64],
    center: [f64; 2],
) -> Result<Vec<PointEval>> {
    let n_mu = if xs.is_empty() {
        0
    } else {
        mus.len() / xs.len()
    };
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let mu = &mus[i * n_mu..(i + 1) * n_mu];
            let (y, jac) = transform.map_jac(x, mu)?;
            let yd = [
                Dual2::new(y[0] - center[0], jac[0]),
                Dual2::new(y[1] - center[1], jac[1]),
            ];
            Ok(PointEval {
                x,
                y,
                jac,
                w: exact.u(yd, mu),
            })
        })
        .collect()
}

/// Population standard deviation of `values` under nonnegative `weights`.
pub fn weighted_std(values: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
    let var = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - mean).powi(2))
        .sum::<f64>()
        / total;
    var.max(0.0).sqrt()
}

/// Arc-length weight `|gamma'|` of a boundary evaluation on a circle.
pub fn arclength_weight(p: &PointEval) -> f64 {
    let d = [-p.x[1], p.x[0]];
    let v = [
        p.jac[0][0] * d[0] + p.jac[0][1] * d[1],
        p.jac[1][0] * d[0] + p.jac[1][1] * d[1],
    ];
    v[0].hypot(v[1])
}

const MIN_BOUNDARY_SAMPLES: usize = 16;

fn check_boundary(n: usize) -> Result<()> {
    if n < MIN_BOUNDARY_SAMPLES {
        return Err(Error::Argument(format!(
            "optimality error needs at least {MIN_BOUNDARY_SAMPLES} boundary samples, got {n}"
        )));
    }
    Ok(())
}

/// Arc-length weighted spread of `|grad u|` over the mapped boundary.
pub fn optimality_error_dirichlet(boundary: &[PointEval]) -> Result<f64> {
    check_boundary(boundary.len())?;
    let vals: Vec<f64> = boundary
        .iter()
        .map(|p| {
            let g = p.physical_grad();
            g[0].hypot(g[1])
        })
        .collect();
    let w: Vec<f64> = boundary.iter().map(arclength_weight).collect();
    Ok(weighted_std(&vals, &w))
}

/// Arc-length weighted spread of
/// `rho = |grad u|^2 / 2 + (u/2)(kappa H - 2 kappa^2) - f` over the mapped
/// boundary, with `H` the signed curvature at each sample.
pub fn optimality_error_robin(
    boundary: &[PointEval],
    curvature: &[f64],
    kappa: f64,
    source: &Source,
    mu: &[f64],
) -> Result<f64> {
    check_boundary(boundary.len())?;
    let vals: Vec<f64> = boundary
        .iter()
        .zip(curvature)
        .map(|(p, &h)| {
            let g = p.physical_grad();
            let u = p.w.value;
            0.5 * (g[0] * g[0] + g[1] * g[1]) + 0.5 * u * (kappa * h - 2.0 * kappa * kappa)
                - source.eval(p.y, mu)
        })
        .collect();
    let w: Vec<f64> = boundary.iter().map(arclength_weight).collect();
    Ok(weighted_std(&vals, &w))
}

/// Signed curvature of the mapped circle at each angle.
pub fn boundary_curvatures(
    transform: &Transform,
    radius: f64,
    ts: &[f64],
    mu: &[f64],
) -> Result<Vec<f64>> {
    let mj = |x: [f64; 2]| transform.map_jac(x, mu).unwrap_or((x, [[f64::NAN; 2]; 2]));
    ts.iter()
        .map(|&t| boundary_curvature(&mj, radius, t))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    pub std: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            std: var.sqrt(),
        }
    }
}

/// Weak-form residuals for random test functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub stats: Stats,
    /// `|residual|` per test function.
    pub residuals: Vec<f64>,
    /// Monte-Carlo standard error of each residual.
    pub std_errors: Vec<f64>,
}

const MONOMIALS: usize = 6;

fn monomials(x: [f64; 2]) -> ([f64; MONOMIALS], [[f64; 2]; MONOMIALS]) {
    let [a, b] = x;
    (
        [1.0, a, b, a * a, a * b, b * b],
        [
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [2.0 * a, 0.0],
            [b, a],
            [0.0, 2.0 * b],
        ],
    )
}

/// Monte-Carlo weak-form residual `|int (A grad w . grad phi - f~ phi)|` for
/// `n_test` test functions `phi = alpha P`, with `P` a quadratic polynomial
/// whose six coefficients are uniform on `(0, 1)`.
///
/// `evals` are samples uniform over the reference domain and parameter box,
/// `mus` the matching parameters; the integral is scaled by `measure`
/// (domain area times parameter-box volume). Each residual is linear in
/// the coefficients, so the six monomial integrals are estimated once.
pub fn variational_residual<R: Rng + ?Sized>(
    lifting: &Lifting,
    source: &Source,
    evals: &[PointEval],
    mus: &[f64],
    measure: f64,
    n_test: usize,
    rng: &mut R,
) -> Result<ResidualReport> {
    if evals.is_empty() {
        return Err(Error::Argument("no Monte-Carlo samples".into()));
    }
    let n = evals.len();
    let n_mu = mus.len() / n;
    let mut sum = [0.0; MONOMIALS];
    let mut cross = [[0.0; MONOMIALS]; MONOMIALS];
    for (i, p) in evals.iter().enumerate() {
        let mu = &mus[i * n_mu..(i + 1) * n_mu];
        let (alpha, _) = lifting.alpha_beta(Dual2::seed(p.x), Dual2::seed(p.y))?;
        let (m, dm) = monomials(p.x);
        let gw = p.physical_grad();
        let f = source.eval(p.y, mu);
        let mut row = [0.0; MONOMIALS];
        for k in 0..MONOMIALS {
            let gphi = [
                alpha.grad[0] * m[k] + alpha.value * dm[k][0],
                alpha.grad[1] * m[k] + alpha.value * dm[k][1],
            ];
            let gphi_t = apply_inv_transpose(&p.jac, gphi);
            row[k] = gw[0] * gphi_t[0] + gw[1] * gphi_t[1] - f * alpha.value * m[k];
        }
        for a in 0..MONOMIALS {
            sum[a] += row[a];
            for b in 0..MONOMIALS {
                cross[a][b] += row[a] * row[b];
            }
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let mut residuals = Vec::with_capacity(n_test);
    let mut std_errors = Vec::with_capacity(n_test);
    for _ in 0..n_test {
        let c: [f64; MONOMIALS] = std::array::from_fn(|_| rng.random::<f64>());
        let r: f64 = (0..MONOMIALS).map(|k| c[k] * mean[k]).sum();
        let mut var = 0.0;
        for a in 0..MONOMIALS {
            for b in 0..MONOMIALS {
                var += c[a] * c[b] * (cross[a][b] / nf - mean[a] * mean[b]);
            }
        }
        residuals.push((measure * r).abs());
        std_errors.push(measure * (var.max(0.0) / nf).sqrt());
    }
    Ok(ResidualReport {
        stats: Stats::of(&residuals),
        residuals,
        std_errors,
    })
}

/// `sqrt(volume / N * sum (w - u_exact)^2)` over the evaluated points.
pub fn l2_error(evals: &[PointEval], exact: &[PointEval], volume: f64) -> Result<f64> {
    if evals.is_empty() || evals.len() != exact.len() {
        return Err(Error::Argument(
            "L2 error needs matching nonempty samples".into(),
        ));
    }
    let s: f64 = evals
        .iter()
        .zip(exact)
        .map(|(a, b)| (a.w.value - b.w.value).powi(2))
        .sum();
    Ok((volume / evals.len() as f64 * s).sqrt())
}
