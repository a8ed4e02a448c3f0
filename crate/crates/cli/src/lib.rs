//! Command-line driver: `gesopt run`, `gesopt eval` and `gesopt report`.

pub mod artifacts;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gesopt::trainer::{evaluate, read_checkpoint, train, Case, Metrics, RunConfig, TrainState};
use gesopt::Error;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABORT: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::Config(_) | Error::Argument(_)) | CliError::Usage(_) => {
                EXIT_CONFIG
            }
            CliError::Core(Error::NonFiniteLoss { .. }) => EXIT_ABORT,
            _ => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gesopt",
    version,
    about = "Neural shape optimization with symplectic domain maps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Overrides {
    /// Random seed; takes precedence over GESOPT_SEED and the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for checkpoints and artifacts.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for loss evaluation.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the configured case and write its artifacts.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Recompute the artifacts of a saved checkpoint.
    Eval {
        checkpoint: PathBuf,
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Tabulate metrics.json files from several runs.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a configuration file and applies the seed, output and worker
/// overrides (flag, then `GESOPT_SEED`, then file).
pub fn load_config(
    path: &Path,
    o: &Overrides,
    env_seed: Option<&str>,
) -> Result<RunConfig, CliError> {
    let text = read(path)?;
    let mut cfg = RunConfig::parse(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        e => e,
    })?;
    if let Some(s) = env_seed {
        cfg.seed = s.trim().parse().map_err(|_| {
            CliError::Usage(format!(
                "GESOPT_SEED must be an unsigned integer, got {s:?}"
            ))
        })?;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(d) = &o.out_dir {
        cfg.out_dir = Some(d.clone());
    }
    if let Some(w) = o.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        cfg.workers = Some(w);
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig, fallback: &Path) -> Result<PathBuf, CliError> {
    let dir = cfg
        .out_dir
        .clone()
        .unwrap_or_else(|| fallback.to_path_buf());
    fs::create_dir_all(&dir).map_err(|source| CliError::File {
        path: dir.clone(),
        source,
    })?;
    Ok(dir)
}

fn print_summary(m: &Metrics) {
    let show = |name: &str, s: Option<gesopt::problems::Stats>| {
        if let Some(s) = s {
            eprintln!(
                "  {name:<22} mean {:.3e}  max {:.3e}  min {:.3e}  std {:.3e}",
                s.mean, s.max, s.min, s.std
            );
        }
    };
    eprintln!("{} after {} epochs:", m.case, m.epochs);
    show("hausdorff", m.hausdorff);
    show("optimality_error", m.optimality_error);
    show("l2_error", m.l2_error);
    show("variational_residual", m.variational_residual);
    show("energy", m.energy);
}

fn eval_checkpoint(cfg: &RunConfig, checkpoint: &Path, dir: &Path) -> Result<(), CliError> {
    let doc = read_checkpoint(checkpoint)?;
    if doc["config_digest"].as_str() != Some(cfg.digest().as_str()) {
        eprintln!("warning: checkpoint was written for a different configuration");
    }
    let state = TrainState::from_checkpoint(&doc, cfg)?;
    let case = match cfg.case {
        Case::Eval => state.inferred_case(&cfg.spec()),
        c => c,
    };
    let pool = gesopt::trainer::thread_pool(cfg.workers)?;
    let report = pool.install(|| evaluate(cfg, case, &state))?;
    artifacts::write_evaluation(dir, &report)?;
    print_summary(&report.metrics);
    Ok(())
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg, Path::new(&format!("runs/{}", cfg.case.name())))?;
    if cfg.case == Case::Eval {
        let ckpt = cfg.eval.checkpoint.clone().expect("validated");
        return eval_checkpoint(cfg, &ckpt, &dir);
    }
    let ckpt = dir.join("checkpoint.json");
    let every = cfg.train.checkpoint_every();
    let start = Instant::now();
    let result = train(cfg, Some(&ckpt), &mut |epoch, loss| {
        if epoch % every == 0 {
            eprintln!(
                "epoch {epoch:>6}  loss {loss:.6e}  {:.1}s",
                start.elapsed().as_secs_f64()
            );
        }
    });
    let outcome = match result {
        Ok(o) => o,
        Err(abort) => {
            artifacts::write_loss_history(&dir, &abort.history)?;
            return Err(abort.error.into());
        }
    };
    let train_secs = start.elapsed().as_secs_f64();
    artifacts::write_loss_history(&dir, &outcome.history)?;
    let pool = gesopt::trainer::thread_pool(cfg.workers)?;
    let mut report = pool.install(|| evaluate(cfg, cfg.case, &outcome.state))?;
    report.loss_history = outcome.history;
    artifacts::write_evaluation(&dir, &report)?;
    eprintln!(
        "training took {train_secs:.1}s; artifacts in {}",
        dir.display()
    );
    print_summary(&report.metrics);
    Ok(())
}

/// Reads each metrics file, warning about unreadable ones.
pub fn report(files: &[PathBuf]) -> Result<String, CliError> {
    let mut runs = Vec::new();
    for f in files {
        match read(f).and_then(|t| Ok(serde_json::from_str::<Metrics>(&t)?)) {
            Ok(m) => runs.push((f.display().to_string(), m)),
            Err(e) => eprintln!("warning: skipping {}: {e}", f.display()),
        }
    }
    if runs.is_empty() {
        return Err(CliError::Usage("no readable metrics files".into()));
    }
    Ok(artifacts::report_table(&runs))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let env_seed = std::env::var("GESOPT_SEED").ok();
    match cli.command {
        Command::Run { config, overrides } => {
            run(&load_config(&config, &overrides, env_seed.as_deref())?)
        }
        Command::Eval {
            checkpoint,
            config,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides, env_seed.as_deref())?;
            let fallback = checkpoint.parent().unwrap_or(Path::new(".")).to_path_buf();
            let dir = out_dir(&cfg, &fallback)?;
            eval_checkpoint(&cfg, &checkpoint, &dir)
        }
        Command::Report { files } => {
            print!("{}", report(&files)?);
            Ok(())
        }
    }
}

/// Entry point returning the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
