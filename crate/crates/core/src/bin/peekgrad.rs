//! `peekgrad`: runs the gradient-estimator experiments and writes CSV.
//!
//! Settings resolve as command-line flags over `--config` entries over
//! built-in defaults. Model parameters come from `--model-params <file>`,
//! `model.<key>` config entries or repeated `--param key=value` flags.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use peekgrad_core::harness::{self, Command, ExperimentSpec, MODEL_PARAM_PREFIX};
use peekgrad_core::kv::KvMap;

#[derive(Parser, Debug)]
#[command(
    name = "peekgrad",
    version,
    about = "Dimensional-peeking gradient estimator experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Mean difference between paired PGO and PGO-DP estimates.
    Verify(Opts),
    /// Variance reduction ratio Var(PGO) / Var(PGO-DP).
    Vrr(Opts),
    /// Slowdown of a peeked evaluation relative to a scalar one.
    Bench(Opts),
    /// Optimization sweep with trajectories, AUC and improvement report.
    Optimize(Opts),
    /// Closed-form Heaviside variance split next to measured VRR.
    Oracle(Opts),
}

#[derive(Args, Debug, Default)]
struct Opts {
    /// heaviside, linear, branchy, dynamnews or hotel.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated estimators: pgo, pgo_dp.
    #[arg(long)]
    estimator: Option<String>,
    /// Comma-separated smoothing scales.
    #[arg(long)]
    sigma: Option<String>,
    /// Comma-separated coverage radii in units of sigma.
    #[arg(long = "c-factor")]
    c_factor: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key = value` file of model parameters.
    #[arg(long = "model-params")]
    model_params: Option<PathBuf>,
    /// Model parameter override, `key=value`; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Comma-separated optimizers: gd, adam.
    #[arg(long)]
    optimizer: Option<String>,
    /// Comma-separated learning rates.
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    /// Stop each optimization run after this many model evaluations.
    #[arg(long = "eval-budget")]
    eval_budget: Option<u64>,
    /// Model evaluations averaged per recorded objective value.
    #[arg(long = "objective-evals")]
    objective_evals: Option<usize>,
    /// Comma-separated evaluation point.
    #[arg(long, allow_hyphen_values = true)]
    point: Option<String>,
    /// verify: exact enumeration instead of sampling.
    #[arg(long)]
    exact: bool,
    /// Independent realizations for f(x) and f(x + R).
    #[arg(long = "no-crn")]
    no_crn: bool,
    /// Timed repetitions per bench row.
    #[arg(long = "bench-reps")]
    bench_reps: Option<usize>,
    /// Adds wall-clock columns to optimize output.
    #[arg(long)]
    timing: bool,
}

impl Opts {
    fn overrides(&self) -> anyhow::Result<KvMap> {
        let mut kv = KvMap::new();
        let mut set = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                kv.insert(k, v);
            }
        };
        set("model", self.model.clone());
        set("estimator", self.estimator.clone());
        set("sigma", self.sigma.clone());
        set("c_factor", self.c_factor.clone());
        set("reps", self.reps.map(|v| v.to_string()));
        set("seed", self.seed.map(|v| v.to_string()));
        set("out", self.out.as_ref().map(|p| p.display().to_string()));
        set("optimizer", self.optimizer.clone());
        set("lr", self.lr.clone());
        set("steps", self.steps.map(|v| v.to_string()));
        set("eval_budget", self.eval_budget.map(|v| v.to_string()));
        set(
            "objective_evals",
            self.objective_evals.map(|v| v.to_string()),
        );
        set("point", self.point.clone());
        set("bench_reps", self.bench_reps.map(|v| v.to_string()));
        set("exact", self.exact.then(|| "true".to_string()));
        set("crn", self.no_crn.then(|| "false".to_string()));
        set("timing", self.timing.then(|| "true".to_string()));
        for p in &self.params {
            let Some((k, v)) = p.split_once('=') else {
                bail!("--param expects key=value, got '{p}'");
            };
            kv.insert(format!("{MODEL_PARAM_PREFIX}{}", k.trim()), v.trim());
        }
        Ok(kv)
    }

    fn resolve(&self, command: Command) -> anyhow::Result<ExperimentSpec> {
        let mut kv = match &self.config {
            Some(path) => KvMap::load(path)?,
            None => KvMap::new(),
        };
        if let Some(path) = &self.model_params {
            let mut prefixed = KvMap::new();
            for (k, v) in KvMap::load(path)?.iter() {
                prefixed.insert(format!("{MODEL_PARAM_PREFIX}{k}"), v);
            }
            kv.merge(&prefixed);
        }
        kv.merge(&self.overrides()?);
        ExperimentSpec::from_kv(command, &kv).context("invalid experiment settings")
    }
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let (command, opts) = match &cli.command {
        Cmd::Verify(o) => (Command::Verify, o),
        Cmd::Vrr(o) => (Command::Vrr, o),
        Cmd::Bench(o) => (Command::Bench, o),
        Cmd::Optimize(o) => (Command::Optimize, o),
        Cmd::Oracle(o) => (Command::Oracle, o),
    };
    let spec = opts.resolve(command)?;
    let tables = harness::run(&spec).with_context(|| format!("{} failed", command.as_str()))?;
    let stdout = std::io::stdout();
    for path in harness::write_outputs(&spec, &tables, stdout.lock())? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
