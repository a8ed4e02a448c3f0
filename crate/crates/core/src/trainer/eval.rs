use serde::{Deserialize, Serialize};

use super::config::{Case, RunConfig};
use super::loss::{circumference, loss_and_grad, BoundaryTerm, Collocation, Model};
use super::{model_parts, phase_rng, TrainState, EVAL_STREAM};
use crate::error::{Error, Result};
use crate::geometry::{
    arclength_centroid, hausdorff, mask_obstacle, sample_interior, uniform_angles, BoundarySample,
    Obstacle,
};
use crate::problems::{
    boundary_curvatures, exact_oracle, exact_points, l2_error, optimality_error_dirichlet,
    optimality_error_robin, variational_residual, BoundaryCondition, Solution, Stats, Transform,
};

/// Metrics for one parameter value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MuMetrics {
    pub mu: Vec<f64>,
    pub hausdorff: Option<f64>,
    pub optimality_error: Option<f64>,
    pub l2_error: Option<f64>,
    /// Monte-Carlo estimate of the energy.
    pub energy: Option<f64>,
    pub exact_energy: Option<f64>,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub case: String,
    pub epochs: usize,
    pub hausdorff: Option<Stats>,
    pub optimality_error: Option<Stats>,
    pub l2_error: Option<Stats>,
    pub variational_residual: Option<Stats>,
    pub energy: Option<Stats>,
    pub per_mu: Vec<MuMetrics>,
}

/// Learned and reference boundary sampled at the same angles.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub mu: Vec<f64>,
    pub t: Vec<f64>,
    pub learned: Vec<[f64; 2]>,
    /// Empty when no reference shape is known.
    pub reference: Vec<[f64; 2]>,
}

/// Field value at a physical point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub mu: Vec<f64>,
    pub y: [f64; 2],
    pub u: f64,
    /// Absolute error against the closed-form solution, when known.
    pub err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub metrics: Metrics,
    pub loss_history: Vec<f64>,
    pub curves: Vec<Curve>,
    pub field_samples: Vec<FieldSample>,
    pub obstacle: Option<Obstacle>,
}

fn stats_of(per_mu: &[MuMetrics], f: impl Fn(&MuMetrics) -> Option<f64>) -> Option<Stats> {
    let v: Vec<f64> = per_mu.iter().filter_map(f).collect();
    (!v.is_empty()).then(|| Stats::of(&v))
}

fn repeat(mu: &[f64], n: usize) -> Vec<f64> {
    (0..n).flat_map(|_| mu.iter().copied()).collect()
}

/// Evaluates a trained state. Uses its own random stream, so repeated
/// evaluations of the same state agree bit for bit.
pub fn evaluate(cfg: &RunConfig, case: Case, state: &TrainState) -> Result<RunReport> {
    let spec = cfg.spec();
    let e = &cfg.eval;
    let mut rng = phase_rng(cfg.seed, EVAL_STREAM);
    let mu_list: Vec<Vec<f64>> = if spec.mu_space.is_empty() {
        vec![Vec::new()]
    } else {
        (0..e.mu_samples)
            .map(|_| spec.mu_space.sample(&mut rng))
            .collect()
    };
    let ts = uniform_angles(e.boundary_points);
    let radius = spec.domain.radius();
    let shape = matches!(
        case,
        Case::ShapeDirichlet | Case::ShapeRobin | Case::Bernoulli
    );
    let exact = match case {
        Case::LearnMap => None,
        Case::PdeSolve if state.transform != Transform::Identity => None,
        _ => exact_oracle(&spec),
    };
    let obstacle = match spec.bc {
        BoundaryCondition::Bernoulli { obstacle, .. } => Some(obstacle),
        _ => None,
    };
    let (lifting, source) = model_parts(&spec);
    let volume = spec.volume();
    let circle: Vec<[f64; 2]> = ts
        .iter()
        .map(|&t| BoundarySample::on_circle(radius, t).x)
        .collect();

    let mut per_mu = Vec::with_capacity(mu_list.len());
    let mut curves = Vec::new();
    let mut field_samples = Vec::new();
    for (k, mu) in mu_list.iter().enumerate() {
        let plot = k < e.plot_mu;
        let learned = circle
            .iter()
            .map(|&x| state.transform.apply(x, mu))
            .collect::<Result<Vec<_>>>()?;
        let mut m = MuMetrics {
            mu: mu.clone(),
            ..Default::default()
        };
        let mut reference = Vec::new();
        if case == Case::LearnMap {
            let target = cfg.fixed_transform();
            reference = circle
                .iter()
                .map(|&x| target.apply(x, mu))
                .collect::<Result<Vec<_>>>()?;
            m.hausdorff = Some(hausdorff(&learned, &reference)?);
        } else {
            let field = state
                .field
                .as_ref()
                .ok_or_else(|| Error::Config("evaluation needs a field network".into()))?;
            let sol = Solution {
                field,
                lifting,
                transform: &state.transform,
            };
            let center = match exact {
                Some(ex) if shape && ex.translation_invariant() => arclength_centroid(&learned),
                _ => [0.0, 0.0],
            };
            if let Some(ex) = exact {
                let r = ex.optimal_radius();
                reference = ts
                    .iter()
                    .map(|&t| [center[0] + r * t.cos(), center[1] + r * t.sin()])
                    .collect();
                if shape {
                    m.hausdorff = Some(hausdorff(&learned, &reference)?);
                }
                m.exact_energy = ex.energy(mu);
            }
            if shape {
                let b = sol.eval_boundary(radius, &ts, mu)?;
                m.optimality_error = Some(match spec.bc {
                    BoundaryCondition::Robin { kappa } => {
                        let curv = boundary_curvatures(&state.transform, radius, &ts, mu)?;
                        optimality_error_robin(&b, &curv, kappa.value(mu), &spec.source, mu)?
                    }
                    _ => optimality_error_dirichlet(&b)?,
                });
            }
            let drawn = sample_interior(&spec.domain, e.mc_points, &mut rng)?;
            let kept = match obstacle {
                Some(ob) if case == Case::Bernoulli => mask_obstacle(
                    &drawn,
                    |x| state.transform.apply(x, mu).unwrap_or([f64::NAN; 2]),
                    &ob,
                )?,
                _ => drawn.clone(),
            };
            let mus = repeat(mu, kept.len());
            let evals = sol.eval_points(&kept, &mus)?;
            let mut exact_w = None;
            if let Some(ex) = exact {
                let pts = exact_points(&ex, &state.transform, &kept, &mus, center)?;
                let vol = volume * kept.len() as f64 / drawn.len() as f64;
                m.l2_error = Some(l2_error(&evals, &pts, vol)?);
                exact_w = Some(pts);
            }
            let mut coll = Collocation {
                interior: kept.clone(),
                interior_mu: mus.clone(),
                interior_weight: volume / drawn.len() as f64,
                ..Default::default()
            };
            if let BoundaryCondition::Robin { kappa } = spec.bc {
                coll.boundary = ts
                    .iter()
                    .map(|&t| BoundarySample::on_circle(radius, t))
                    .collect();
                coll.boundary_mu = repeat(mu, ts.len());
                coll.boundary_term = Some(BoundaryTerm::Robin {
                    kappa,
                    scale: circumference(volume) / ts.len() as f64,
                });
            }
            let model = Model {
                field,
                transform: &state.transform,
                lifting,
                source,
            };
            m.energy = Some(loss_and_grad(&model, &coll, false)?.loss);
            if plot {
                for (i, p) in evals.iter().take(e.field_points).enumerate() {
                    field_samples.push(FieldSample {
                        mu: mu.clone(),
                        y: p.y,
                        u: p.w.value,
                        err: exact_w.as_ref().map(|w| (p.w.value - w[i].w.value).abs()),
                    });
                }
            }
        }
        if plot {
            curves.push(Curve {
                mu: mu.clone(),
                t: ts.clone(),
                learned,
                reference,
            });
        }
        per_mu.push(m);
    }

    let residual_applies =
        case == Case::PdeSolve && !matches!(spec.bc, BoundaryCondition::Robin { .. });
    let variational = if residual_applies {
        let field = state.field.as_ref().expect("pde-solve trains a field");
        let sol = Solution {
            field,
            lifting,
            transform: &state.transform,
        };
        let xs = sample_interior(&spec.domain, e.mc_points, &mut rng)?;
        let mus = spec.mu_space.sample_many(xs.len(), &mut rng);
        let evals = sol.eval_points(&xs, &mus)?;
        let measure = volume * spec.mu_space.volume();
        let r = variational_residual(
            &lifting,
            &spec.source,
            &evals,
            &mus,
            measure,
            e.test_functions,
            &mut rng,
        )?;
        Some(r.stats)
    } else {
        None
    };

    let metrics = Metrics {
        case: case.name().to_string(),
        epochs: state.epoch,
        hausdorff: stats_of(&per_mu, |m| m.hausdorff),
        optimality_error: stats_of(&per_mu, |m| m.optimality_error),
        l2_error: stats_of(&per_mu, |m| m.l2_error),
        variational_residual: variational,
        energy: stats_of(&per_mu, |m| m.energy),
        per_mu,
    };
    Ok(RunReport {
        metrics,
        loss_history: Vec::new(),
        curves,
        field_samples,
        obstacle,
    })
}
