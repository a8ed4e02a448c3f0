//! Joint training of the field and map networks.

mod adam;
mod config;
mod eval;
mod loss;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub use adam::{adam_step, AdamState};
pub use config::{
    Case, EvalConfig, FieldNetConfig, MapConfig, ProblemConfig, RunConfig, SympNetConfig,
    TrainConfig,
};
pub use eval::{evaluate, Curve, FieldSample, Metrics, MuMetrics, RunReport};
pub use loss::{
    assemble, bernoulli_collocation, circumference, energy_density, loss_and_grad,
    loss_and_grad_tape, loss_bernoulli, loss_deepritz, loss_joint_dirichlet, loss_joint_robin,
    loss_value_direct, matching_mean_grad, penalty_density, robin_collocation, robin_density,
    BoundaryTerm, Collocation, LossGrad, Model,
};

use crate::error::{Error, Result};
use crate::fieldnet::FieldNetParams;
use crate::geometry::{mask_obstacle, sample_boundary, sample_interior};
use crate::problems::{BoundaryCondition, ProblemSpec, Source, Transform};
use crate::sympnet::SympNetParams;

/// Trainable parameters and optimizer state after some number of epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub field: Option<FieldNetParams>,
    /// Learned map for shape and map-learning cases, fixed map otherwise.
    pub transform: Transform,
    pub adam_field: Option<AdamState>,
    pub adam_map: Option<AdamState>,
}

/// RNG for one phase of a run: stream 0 initializes, stream `e + 1` draws
/// the collocation points of epoch `e`.
pub fn phase_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Stream reserved for evaluation.
pub const EVAL_STREAM: u64 = u64::MAX;

impl TrainState {
    pub fn init(cfg: &RunConfig) -> Result<Self> {
        let spec = cfg.spec();
        let n_mu = spec.mu_space.dim();
        let mut rng = phase_rng(cfg.seed, 0);
        let field = match (&cfg.fieldnet, cfg.case.trains_field()) {
            (Some(f), true) => Some(FieldNetParams::init(
                &f.hidden,
                n_mu,
                f.activation,
                &mut rng,
            )?),
            _ => None,
        };
        let transform = match (&cfg.sympnet, cfg.case.trains_map()) {
            (Some(s), true) => Transform::Learned(SympNetParams::init(
                s.modules,
                s.width,
                n_mu,
                s.activation,
                &mut rng,
            )?),
            _ => cfg.fixed_transform(),
        };
        Ok(Self {
            epoch: 0,
            adam_field: field.as_ref().map(|f| AdamState::new(f.n_params())),
            adam_map: transform.sympnet().map(|n| AdamState::new(n.n_params())),
            field,
            transform,
        })
    }

    pub fn sympnet(&self) -> Option<&SympNetParams> {
        self.transform.sympnet()
    }

    /// Checkpoint document with sorted keys.
    pub fn to_checkpoint(&self, seed: u64, digest: &str) -> Result<Value> {
        let doc = json!({
            "epoch": self.epoch,
            "seed": seed,
            "config_digest": digest,
            "fieldnet": self.field.as_ref().map(FieldNetParams::to_json),
            "sympnet": self.sympnet().map(SympNetParams::to_json),
            "adam_states": {
                "fieldnet": self.adam_field,
                "sympnet": self.adam_map,
            },
        });
        // serde_json maps are ordered by key; a round trip through Value sorts
        // nested objects as well.
        Ok(serde_json::from_str(&serde_json::to_string(&doc)?)?)
    }

    /// Restores a state; the map falls back to the configured fixed map when
    /// the checkpoint has none.
    pub fn from_checkpoint(doc: &Value, cfg: &RunConfig) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("checkpoint: {m}"));
        let epoch = doc["epoch"].as_u64().ok_or_else(|| bad("missing epoch"))? as usize;
        let field = match &doc["fieldnet"] {
            Value::Null => None,
            v => Some(FieldNetParams::from_json(v)?),
        };
        let transform = match &doc["sympnet"] {
            Value::Null => cfg.fixed_transform(),
            v => Transform::Learned(SympNetParams::from_json(v)?),
        };
        let adam = |k: &str| -> Result<Option<AdamState>> {
            Ok(match doc["adam_states"].get(k) {
                None | Some(Value::Null) => None,
                Some(v) => Some(serde_json::from_value(v.clone())?),
            })
        };
        Ok(Self {
            epoch,
            adam_field: adam("fieldnet")?,
            adam_map: adam("sympnet")?,
            field,
            transform,
        })
    }

    /// Case a checkpoint was trained for, judged by which networks it holds.
    pub fn inferred_case(&self, spec: &ProblemSpec) -> Case {
        match (self.field.is_some(), self.sympnet().is_some()) {
            (true, false) => Case::PdeSolve,
            (false, _) => Case::LearnMap,
            (true, true) => match spec.bc {
                BoundaryCondition::Dirichlet => Case::ShapeDirichlet,
                BoundaryCondition::Robin { .. } => Case::ShapeRobin,
                BoundaryCondition::Bernoulli { .. } => Case::Bernoulli,
            },
        }
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Value> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Loss history and final state of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub history: Vec<f64>,
}

/// Error of an aborted run together with what was recorded before it.
#[derive(Debug)]
pub struct TrainAbort {
    pub error: Error,
    pub history: Vec<f64>,
}

impl From<Error> for TrainAbort {
    fn from(error: Error) -> Self {
        Self {
            error,
            history: Vec::new(),
        }
    }
}

/// Collocation for one epoch of a field-training case.
pub fn draw_collocation(
    cfg: &RunConfig,
    case: Case,
    transform: &Transform,
    epoch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Collocation> {
    let spec = cfg.spec();
    let t = &cfg.train;
    let xs = sample_interior(&spec.domain, t.points, rng)?;
    let mus = spec.mu_space.sample_many(t.points, rng);
    let nb = t.boundary_points();
    match spec.bc {
        BoundaryCondition::Robin { .. } => {
            let b = sample_boundary(&spec.domain, nb, rng)?;
            let bm = spec.mu_space.sample_many(nb, rng);
            robin_collocation(&spec, &xs, &mus, &b, &bm)
        }
        BoundaryCondition::Bernoulli { obstacle, .. } if case == Case::Bernoulli => {
            let kept = mask_obstacle(
                &xs,
                |x| transform.apply(x, &[]).unwrap_or([f64::NAN; 2]),
                &obstacle,
            )?;
            let penalty = t.penalty_active(epoch).then_some(t.penalty_weight);
            let b = match penalty {
                Some(_) => sample_boundary(&spec.domain, nb, rng)?,
                None => Vec::new(),
            };
            bernoulli_collocation(&spec, &kept, t.points, &b, penalty)
        }
        _ => Ok(Collocation {
            interior: xs,
            interior_mu: mus,
            interior_weight: spec.volume() / t.points as f64,
            ..Default::default()
        }),
    }
}

/// Lifting and source the losses of `case` use.
pub fn model_parts(spec: &ProblemSpec) -> (crate::fieldnet::Lifting, Source) {
    let source = match spec.bc {
        BoundaryCondition::Bernoulli { .. } => Source::Zero,
        _ => spec.source,
    };
    (spec.lifting(), source)
}

/// One epoch: fresh points, joint gradient, simultaneous update. Returns
/// the loss.
pub fn epoch_step(cfg: &RunConfig, state: &mut TrainState) -> Result<f64> {
    let epoch = state.epoch;
    let mut rng = phase_rng(cfg.seed, epoch as u64 + 1);
    let spec = cfg.spec();
    let t = &cfg.train;
    let penalty = cfg.case == Case::Bernoulli && t.penalty_active(epoch);
    let non_finite = |detail: String| Error::NonFiniteLoss { epoch, detail };
    if cfg.case == Case::LearnMap {
        // The map is fitted on the reference circle, whose image is the shape.
        let xs: Vec<[f64; 2]> = sample_boundary(&spec.domain, t.points, &mut rng)?
            .iter()
            .map(|b| b.x)
            .collect();
        let mus = spec.mu_space.sample_many(t.points, &mut rng);
        let Transform::Learned(net) = &mut state.transform else {
            return Err(Error::Config("learn-map needs a learned map".into()));
        };
        let target = cfg.fixed_transform();
        let (loss, g) = matching_mean_grad(net, &target, &xs, &mus)?;
        if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(format!("matching loss {loss}")));
        }
        let lr = cfg.sympnet.as_ref().map_or(1e-3, |s| s.lr);
        adam_step(
            state.adam_map.as_mut().expect("map optimizer"),
            net.params_mut(),
            &g,
            lr,
        );
        state.epoch += 1;
        return Ok(loss);
    }
    let coll = draw_collocation(cfg, cfg.case, &state.transform, epoch, &mut rng)?;
    let field = state
        .field
        .as_ref()
        .ok_or_else(|| Error::Config("case needs a field network".into()))?;
    let (lifting, source) = model_parts(&spec);
    let model = Model {
        field,
        transform: &state.transform,
        lifting,
        source,
    };
    let lg = match loss::loss_and_grad_detailed(&model, &coll, true) {
        Ok(lg) => lg,
        Err(f) if matches!(f.error, Error::Eval(_) | Error::Degenerate(_)) => {
            return Err(non_finite(loss::diagnose(&model, &coll, &f)));
        }
        Err(f) => return Err(f.error),
    };
    if !lg.loss.is_finite() || lg.theta.iter().chain(&lg.omega).any(|v| !v.is_finite()) {
        return Err(non_finite(format!(
            "loss {} or its gradient is not finite",
            lg.loss
        )));
    }
    let (lr_f, lr_s) = if penalty {
        (t.penalty_lr, t.penalty_lr)
    } else {
        (
            cfg.fieldnet.as_ref().map_or(1e-3, |f| f.lr),
            cfg.sympnet.as_ref().map_or(1e-3, |s| s.lr),
        )
    };
    let field = state.field.as_mut().expect("field network");
    adam_step(
        state.adam_field.as_mut().expect("field optimizer"),
        field.params_mut(),
        &lg.theta,
        lr_f,
    );
    if let Transform::Learned(net) = &mut state.transform {
        adam_step(
            state.adam_map.as_mut().expect("map optimizer"),
            net.params_mut(),
            &lg.omega,
            lr_s,
        );
    }
    state.epoch += 1;
    Ok(lg.loss)
}

/// Worker pool with `workers` threads, all hardware threads by default.
pub fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Runs the epoch loop from `state`, writing a checkpoint every
/// `train.checkpoint_every()` epochs and after the last one. `progress` sees
/// each epoch's loss.
pub fn train_from(
    cfg: &RunConfig,
    mut state: TrainState,
    checkpoint: Option<&Path>,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<TrainOutcome, TrainAbort> {
    let digest = cfg.digest();
    let every = cfg.train.checkpoint_every();
    let mut history = Vec::with_capacity(cfg.train.epochs);
    let pool = thread_pool(cfg.workers)?;
    while state.epoch < cfg.train.epochs {
        let loss = match pool.install(|| epoch_step(cfg, &mut state)) {
            Ok(l) => l,
            Err(error) => return Err(TrainAbort { error, history }),
        };
        history.push(loss);
        progress(state.epoch, loss);
        if let Some(path) = checkpoint {
            if state.epoch % every == 0 || state.epoch == cfg.train.epochs {
                let doc = state.to_checkpoint(cfg.seed, &digest)?;
                let text = serde_json::to_string(&doc).map_err(Error::from)?;
                write_atomic(path, &text)?;
            }
        }
    }
    Ok(TrainOutcome { state, history })
}

pub fn train(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<TrainOutcome, TrainAbort> {
    cfg.validate()?;
    if cfg.case == Case::Eval {
        return Err(
            Error::Config("case eval evaluates a checkpoint and does not train".into()).into(),
        );
    }
    let state = TrainState::init(cfg)?;
    train_from(cfg, state, checkpoint, progress)
}
