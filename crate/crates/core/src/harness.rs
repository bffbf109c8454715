//! Experiment drivers behind the `peekgrad` command line.
//!
//! Every command is a pure function of an [`ExperimentSpec`]. Replication `k`
//! of any experiment draws from [`replication_stream`]`(seed, k)`, and the
//! results are gathered in replication order, so output is byte-identical
//! across runs and thread counts. The only exceptions are wall-clock columns.

use std::fmt::Display;
use std::hint::black_box;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::{
    expectation_oracle, paired_samples, replicate, EstimatorConfig, EstimatorKind, Moments,
    Realizations,
};
use crate::kv::KvMap;
use crate::models::{AnyModel, Heaviside, Negated, ObjectiveModel};
use crate::optim::{self, OptimRunConfig, OptimizerKind, TrajectoryPoint};
use crate::oracle::heaviside_vrr;
use crate::peek::{PeekContext, ScalarTracer};
use crate::stream::{replication_stream, SimRng};

/// Two-sided 99% standard normal quantile.
pub const Z99: f64 = 2.575_829_303_548_900_4;

pub const IMPROVEMENT_THRESHOLDS: [f64; 4] = [0.75, 0.90, 0.95, 0.99];

/// Marker for improvement levels a trajectory never reaches.
pub const NOT_REACHED: &str = "not reached";

/// Prefix of configuration keys forwarded to the model constructor.
pub const MODEL_PARAM_PREFIX: &str = "model.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    Vrr,
    Bench,
    Optimize,
    Oracle,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Vrr => "vrr",
            Command::Bench => "bench",
            Command::Optimize => "optimize",
            Command::Oracle => "oracle",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "verify" => Command::Verify,
            "vrr" => Command::Vrr,
            "bench" => Command::Bench,
            "optimize" => Command::Optimize,
            "oracle" => Command::Oracle,
            other => return Err(Error::Config(format!("unknown command '{other}'"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub command: Command,
    pub model: String,
    pub model_params: KvMap,
    pub estimators: Vec<EstimatorKind>,
    pub sigmas: Vec<f64>,
    pub c_factors: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Evaluation point for verify/vrr/bench; the model default when unset.
    pub point: Option<Vec<i64>>,
    pub common_random_numbers: bool,
    /// verify: enumerate exactly instead of sampling.
    pub exact: bool,
    pub optimizers: Vec<OptimizerKind>,
    /// Learning rates for every optimizer; per-optimizer defaults when empty.
    pub learning_rates: Vec<f64>,
    pub steps: usize,
    pub eval_budget: Option<u64>,
    pub objective_evals: usize,
    pub bench_reps: usize,
    /// Adds wall-clock columns to the optimize trajectories.
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn defaults(command: Command) -> Self {
        let (sigmas, c_factors, reps) = match command {
            Command::Verify | Command::Vrr => (vec![1.0], vec![1.0, 3.0, 5.0, 15.0], 10_000),
            Command::Bench => (vec![1.0], vec![1.0, 3.0, 5.0, 15.0], 1),
            Command::Optimize => (vec![1.0], vec![3.0], 30),
            Command::Oracle => (vec![1.0, 2.0, 4.0, 8.0], vec![15.0], 100_000),
        };
        Self {
            command,
            model: "heaviside".into(),
            model_params: KvMap::new(),
            estimators: vec![EstimatorKind::Pgo, EstimatorKind::PgoDp],
            sigmas,
            c_factors,
            reps,
            seed: 0,
            out: None,
            point: None,
            common_random_numbers: true,
            exact: false,
            optimizers: vec![OptimizerKind::Gd, OptimizerKind::Adam],
            learning_rates: Vec::new(),
            steps: 200,
            eval_budget: None,
            objective_evals: 1,
            bench_reps: 30,
            timing: false,
        }
    }

    /// Built-in defaults overridden by the entries of `kv`. Keys starting
    /// with `model.` become model parameters.
    pub fn from_kv(command: Command, kv: &KvMap) -> Result<Self> {
        let mut s = Self::defaults(command);
        for (key, value) in kv.iter() {
            if let Some(param) = key.strip_prefix(MODEL_PARAM_PREFIX) {
                s.model_params.insert(param, value);
            } else if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Config(format!("unknown configuration key '{key}'")));
            }
        }
        if let Some(v) = kv.get("model") {
            s.model = v.to_string();
        }
        if let Some(v) = kv.get_list("estimator")? {
            s.estimators = v;
        }
        if let Some(v) = kv.get_f64_list("sigma")? {
            s.sigmas = v;
        }
        if let Some(v) = kv.get_f64_list("c_factor")? {
            s.c_factors = v;
        }
        if let Some(v) = kv.get_usize("reps")? {
            s.reps = v;
        }
        if let Some(v) = kv.get_parsed("seed")? {
            s.seed = v;
        }
        if let Some(v) = kv.get("out") {
            s.out = Some(PathBuf::from(v));
        }
        if let Some(v) = kv.get_i64_list("point")? {
            s.point = Some(v);
        }
        if let Some(v) = kv.get_bool("crn")? {
            s.common_random_numbers = v;
        }
        if let Some(v) = kv.get_bool("exact")? {
            s.exact = v;
        }
        if let Some(v) = kv.get_list("optimizer")? {
            s.optimizers = v;
        }
        if let Some(v) = kv.get_f64_list("lr")? {
            s.learning_rates = v;
        }
        if let Some(v) = kv.get_usize("steps")? {
            s.steps = v;
        }
        if let Some(v) = kv.get_parsed("eval_budget")? {
            s.eval_budget = Some(v);
        }
        if let Some(v) = kv.get_usize("objective_evals")? {
            s.objective_evals = v;
        }
        if let Some(v) = kv.get_usize("bench_reps")? {
            s.bench_reps = v;
        }
        if let Some(v) = kv.get_bool("timing")? {
            s.timing = v;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.reps == 0 {
            return fail("reps must be at least 1".into());
        }
        if matches!(
            self.command,
            Command::Verify | Command::Vrr | Command::Oracle
        ) && self.reps < 2
            && !self.exact
        {
            return fail("sample variances need reps >= 2".into());
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return fail(format!(
                "sigma values must be positive, got {:?}",
                self.sigmas
            ));
        }
        if self.c_factors.is_empty()
            || self
                .c_factors
                .iter()
                .any(|c| !(*c >= 0.0) || !c.is_finite())
        {
            return fail(format!(
                "c_factor values must be non-negative, got {:?}",
                self.c_factors
            ));
        }
        if self.estimators.is_empty() || self.optimizers.is_empty() {
            return fail("estimator and optimizer lists must not be empty".into());
        }
        if self.learning_rates.iter().any(|lr| !(*lr > 0.0)) {
            return fail(format!(
                "learning rates must be positive, got {:?}",
                self.learning_rates
            ));
        }
        if self.command == Command::Bench && self.bench_reps < 30 {
            return fail(format!(
                "bench needs at least 30 timed repetitions, got {}",
                self.bench_reps
            ));
        }
        if self.command == Command::Bench && self.sigmas.len() != 1 {
            return fail("bench takes a single sigma".into());
        }
        if self.command == Command::Optimize && !self.estimators.contains(&EstimatorKind::PgoDp) {
            return fail("optimize needs pgo_dp among the estimators as reference".into());
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<AnyModel> {
        AnyModel::from_kv(&self.model, &self.model_params)
    }

    fn point_for(&self, model: &AnyModel) -> Result<Vec<i64>> {
        let x = self.point.clone().unwrap_or_else(|| model.default_point());
        crate::models::check_dim(model.dim(), x.len())?;
        Ok(x)
    }

    fn learning_rates_for(&self, opt: OptimizerKind) -> Vec<f64> {
        if self.learning_rates.is_empty() {
            opt.default_learning_rates().to_vec()
        } else {
            self.learning_rates.clone()
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "model",
    "estimator",
    "sigma",
    "c_factor",
    "reps",
    "seed",
    "out",
    "point",
    "crn",
    "exact",
    "optimizer",
    "lr",
    "steps",
    "eval_budget",
    "objective_evals",
    "bench_reps",
    "timing",
];

/// A header plus string rows, written as CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        out.write_record(&self.header)?;
        for row in &self.rows {
            out.write_record(row)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    /// Index of a header column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

fn s<T: Display>(v: T) -> String {
    v.to_string()
}

fn opt_s<T: Display>(v: Option<T>) -> String {
    v.map_or_else(|| NOT_REACHED.to_string(), |v| v.to_string())
}

fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Z99 * (var / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub model: String,
    pub c_factor: f64,
    pub sigma: f64,
    pub mean_diff: f64,
    pub ci_halfwidth: f64,
    /// Replications, or enumerated cells in exact mode.
    pub n: usize,
}

/// Mean per-dimension difference between paired PGO and PGO-DP estimates.
pub fn run_verify(spec: &ExperimentSpec) -> Result<Vec<VerifyRow>> {
    let model = spec.build_model()?;
    let x = spec.point_for(&model)?;
    let mut rows = Vec::new();
    for &sigma in &spec.sigmas {
        for &c in &spec.c_factors {
            let cfg = EstimatorConfig::new(sigma, c)?.with_crn(spec.common_random_numbers);
            let (mean_diff, ci_halfwidth, n) = if spec.exact {
                let a = expectation_oracle(&model, &x, &cfg, EstimatorKind::Pgo)?;
                let b = expectation_oracle(&model, &x, &cfg, EstimatorKind::PgoDp)?;
                let d =
                    a.mean.iter().zip(&b.mean).map(|(p, q)| p - q).sum::<f64>() / x.len() as f64;
                (d, 0.0, a.cells)
            } else {
                let pairs = paired_samples(&model, &x, &cfg, spec.reps, spec.seed)?;
                let diffs: Vec<f64> = pairs
                    .pgo
                    .iter()
                    .zip(&pairs.pgo_dp)
                    .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).sum::<f64>() / x.len() as f64)
                    .collect();
                let (m, ci) = mean_ci(&diffs);
                (m, ci, spec.reps)
            };
            rows.push(VerifyRow {
                model: spec.model.clone(),
                c_factor: c,
                sigma,
                mean_diff,
                ci_halfwidth,
                n,
            });
        }
    }
    Ok(rows)
}

pub fn verify_table(rows: &[VerifyRow]) -> Table {
    let mut t = Table::new(&[
        "model",
        "c_factor",
        "sigma",
        "mean_diff",
        "ci_halfwidth",
        "n",
    ]);
    for r in rows {
        t.push(vec![
            s(&r.model),
            s(r.c_factor),
            s(r.sigma),
            s(r.mean_diff),
            s(r.ci_halfwidth),
            s(r.n),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct VrrRow {
    pub model: String,
    pub c_factor: f64,
    pub sigma: f64,
    /// `inf` when PGO-DP's sample variance vanishes.
    pub vrr: f64,
    pub n: usize,
}

/// Ratio of dimension-averaged sample variances.
pub fn variance_ratio(pgo: &Moments, pgo_dp: &Moments) -> f64 {
    let a = pgo.variance.iter().sum::<f64>();
    let b = pgo_dp.variance.iter().sum::<f64>();
    if b == 0.0 {
        if a == 0.0 {
            f64::NAN
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

pub fn measured_vrr<M: ObjectiveModel + ?Sized>(
    model: &M,
    x: &[i64],
    cfg: &EstimatorConfig,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    let pairs = paired_samples(model, x, cfg, reps, seed)?;
    Ok(variance_ratio(
        &Moments::from_samples(&pairs.pgo)?,
        &Moments::from_samples(&pairs.pgo_dp)?,
    ))
}

pub fn run_vrr(spec: &ExperimentSpec) -> Result<Vec<VrrRow>> {
    let model = spec.build_model()?;
    let x = spec.point_for(&model)?;
    let mut rows = Vec::new();
    for &sigma in &spec.sigmas {
        for &c in &spec.c_factors {
            let cfg = EstimatorConfig::new(sigma, c)?.with_crn(spec.common_random_numbers);
            rows.push(VrrRow {
                model: spec.model.clone(),
                c_factor: c,
                sigma,
                vrr: measured_vrr(&model, &x, &cfg, spec.reps, spec.seed)?,
                n: spec.reps,
            });
        }
    }
    Ok(rows)
}

pub fn vrr_table(rows: &[VrrRow]) -> Table {
    let mut t = Table::new(&["model", "c_factor", "sigma", "vrr", "n"]);
    for r in rows {
        t.push(vec![
            s(&r.model),
            s(r.c_factor),
            s(r.sigma),
            s(r.vrr),
            s(r.n),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub model: String,
    pub c_factor: f64,
    pub slowdown_median: f64,
    pub slowdown_iqr: f64,
}

/// Shortest batch wall time accepted for one measurement.
const MIN_BATCH: Duration = Duration::from_millis(2);
const MAX_BATCH_LEN: usize = 1 << 22;

fn timer_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..64 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}

fn time_batch(f: &mut dyn FnMut() -> Result<()>, len: usize) -> Result<f64> {
    let start = Instant::now();
    for _ in 0..len {
        f()?;
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Wall-time ratio of a peeked evaluation to a scalar one at the same
/// perturbed point. With `pgo` as the only estimator both sides are scalar,
/// which calibrates the measurement itself.
pub fn run_bench(spec: &ExperimentSpec) -> Result<Vec<BenchRow>> {
    let resolution = timer_resolution();
    if resolution * 100 > MIN_BATCH {
        return Err(Error::TimerResolution(format!(
            "timer resolution {resolution:?} is too coarse for {MIN_BATCH:?} batches; use a larger model workload"
        )));
    }
    let model = spec.build_model()?;
    let x = spec.point_for(&model)?;
    let sigma = spec.sigmas[0];
    let scalar_only = !spec.estimators.contains(&EstimatorKind::PgoDp);
    let mut rows = Vec::new();
    for &c in &spec.c_factors {
        let cfg = EstimatorConfig::new(sigma, c)?;
        let mut rng = replication_stream(spec.seed, 0);
        let draw = cfg.spec().sample_vec(x.len(), &mut rng);
        let omega = Realizations::draw(&mut rng, true);
        let perturbed: Vec<f64> = x.iter().zip(&draw).map(|(a, r)| (a + r) as f64).collect();

        let mut scalar = || -> Result<()> {
            let y = model.evaluate(
                &perturbed,
                &mut ScalarTracer::new(),
                &mut SimRng::new(omega.perturbed),
            )?;
            black_box(y);
            Ok(())
        };
        let mut peeked = || -> Result<()> {
            let mut ctx = PeekContext::new(&x, &draw, cfg.radius())?;
            let inputs = ctx.lift_all();
            let out = model.evaluate(&inputs, &mut ctx, &mut SimRng::new(omega.perturbed))?;
            for i in (0..x.len()).filter(|&i| ctx.is_peeked(i)) {
                black_box(ctx.extract(&out, i)?);
            }
            Ok(())
        };
        let mut scalar_twin = || -> Result<()> {
            let y = model.evaluate(
                &perturbed,
                &mut ScalarTracer::new(),
                &mut SimRng::new(omega.perturbed),
            )?;
            black_box(y);
            Ok(())
        };
        let candidate: &mut dyn FnMut() -> Result<()> = if scalar_only {
            &mut scalar_twin
        } else {
            &mut peeked
        };

        let mut len = 1usize;
        loop {
            if time_batch(&mut scalar, len)? >= MIN_BATCH.as_secs_f64() {
                break;
            }
            if len >= MAX_BATCH_LEN {
                return Err(Error::TimerResolution(
                    "scalar evaluation too fast to time reliably; use a larger model workload"
                        .into(),
                ));
            }
            len *= 2;
        }
        for _ in 0..3 {
            time_batch(&mut scalar, len)?;
            time_batch(candidate, len)?;
        }
        let mut ratios = Vec::with_capacity(spec.bench_reps);
        for rep in 0..spec.bench_reps {
            let (ts, tp) = if rep % 2 == 0 {
                let ts = time_batch(&mut scalar, len)?;
                (ts, time_batch(candidate, len)?)
            } else {
                let tp = time_batch(candidate, len)?;
                (time_batch(&mut scalar, len)?, tp)
            };
            ratios.push(tp / ts);
        }
        ratios.sort_by(f64::total_cmp);
        rows.push(BenchRow {
            model: spec.model.clone(),
            c_factor: c,
            slowdown_median: quantile(&ratios, 0.5),
            slowdown_iqr: quantile(&ratios, 0.75) - quantile(&ratios, 0.25),
        });
    }
    Ok(rows)
}

pub fn bench_table(rows: &[BenchRow]) -> Table {
    let mut t = Table::new(&["model", "c_factor", "slowdown_median", "slowdown_iqr"]);
    for r in rows {
        t.push(vec![
            s(&r.model),
            s(r.c_factor),
            s(r.slowdown_median),
            s(r.slowdown_iqr),
        ]);
    }
    t
}

/// One (estimator, optimizer, learning rate, σ, c) cell of the sweep. PGO
/// ignores the coverage radius and is listed with `c_factor = 0`, at which
/// PGO-DP coincides with it.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfigKey {
    pub estimator: EstimatorKind,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub sigma: f64,
    pub c_factor: f64,
}

/// Mean trajectory of one configuration over its replications.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanTrajectory {
    pub key: OptimConfigKey,
    pub evaluations: Vec<u64>,
    /// Mean minimized objective per step.
    pub objective_mean: Vec<f64>,
    pub objective_ci: Vec<f64>,
    /// Successful replications contributing to each step.
    pub n: Vec<usize>,
    pub elapsed_mean: Vec<f64>,
    pub failed: usize,
    pub errors: Vec<String>,
    pub auc: f64,
}

impl MeanTrajectory {
    pub fn final_mean(&self) -> f64 {
        self.objective_mean.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_ci(&self) -> f64 {
        self.objective_ci.last().copied().unwrap_or(f64::NAN)
    }
}

/// Trapezoidal area under `y` over the axis `x`.
pub fn trapezoid_auc(x: &[u64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (xs[1] - xs[0]) as f64 * (ys[0] + ys[1]) / 2.0)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementRow {
    pub threshold: f64,
    pub pgo_dp_evals: Option<u64>,
    pub pgo_evals: Option<u64>,
    /// `pgo_evals / pgo_dp_evals`.
    pub speedup: Option<f64>,
}

/// Evaluations each estimator's best configuration needs to reach a fraction
/// of the improvement achieved by PGO-DP's best configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementReport {
    pub reference: Option<OptimConfigKey>,
    pub pgo: Option<OptimConfigKey>,
    /// Objective at the start and best objective of the reference curve.
    pub y_start: f64,
    pub y_best: f64,
    pub rows: Vec<ImprovementRow>,
}

/// First evaluation count at which the minimized curve has covered fraction
/// `tau` of the way from `y_start` to `y_best`.
pub fn evals_to_reach(curve: &MeanTrajectory, y_start: f64, y_best: f64, tau: f64) -> Option<u64> {
    let span = y_start - y_best;
    if !(span > 0.0) {
        return None;
    }
    curve
        .objective_mean
        .iter()
        .zip(&curve.evaluations)
        .find(|(y, _)| (y_start - **y) / span >= tau)
        .map(|(_, &e)| e)
}

pub fn improvement_report(
    pgo_dp: Option<&MeanTrajectory>,
    pgo: Option<&MeanTrajectory>,
) -> ImprovementReport {
    let (y_start, y_best) = pgo_dp.map_or((f64::NAN, f64::NAN), |r| {
        let start = r.objective_mean.first().copied().unwrap_or(f64::NAN);
        let best = r
            .objective_mean
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        (start, best)
    });
    let rows = IMPROVEMENT_THRESHOLDS
        .iter()
        .map(|&tau| {
            let dp = pgo_dp.and_then(|r| evals_to_reach(r, y_start, y_best, tau));
            let pg = pgo.and_then(|r| evals_to_reach(r, y_start, y_best, tau));
            let speedup = match (dp, pg) {
                (Some(a), Some(b)) if a > 0 => Some(b as f64 / a as f64),
                _ => None,
            };
            ImprovementRow {
                threshold: tau,
                pgo_dp_evals: dp,
                pgo_evals: pg,
                speedup,
            }
        })
        .collect();
    ImprovementReport {
        reference: pgo_dp.map(|r| r.key.clone()),
        pgo: pgo.map(|r| r.key.clone()),
        y_start,
        y_best,
        rows,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutput {
    pub model: String,
    /// Whether the model's objective was negated for minimization.
    pub negated: bool,
    pub trajectories: Vec<MeanTrajectory>,
    pub improvement: ImprovementReport,
}

impl OptimizeOutput {
    /// Lowest-AUC configuration of `kind`.
    pub fn best(&self, kind: EstimatorKind) -> Option<&MeanTrajectory> {
        self.trajectories
            .iter()
            .filter(|t| t.key.estimator == kind && t.auc.is_finite())
            .fold(None, |best: Option<&MeanTrajectory>, t| match best {
                Some(b) if b.auc <= t.auc => Some(b),
                _ => Some(t),
            })
    }
}

/// Half-width of the start box around the default point.
pub const START_RADIUS: i64 = 100;

/// Uniform random start over the model bounds intersected with
/// `default ± START_RADIUS`.
pub fn random_start<M: ObjectiveModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    rng: &mut R,
) -> Vec<f64> {
    let (lower, upper) = model.bounds();
    model
        .default_point()
        .iter()
        .zip(lower.iter().zip(&upper))
        .map(|(&d, (&lo, &hi))| {
            let a = d.saturating_sub(START_RADIUS).max(lo);
            let b = d.saturating_add(START_RADIUS).min(hi).max(a);
            rng.random_range(a..=b) as f64
        })
        .collect()
}

fn optimize_configs(spec: &ExperimentSpec) -> Vec<OptimConfigKey> {
    let mut keys = Vec::new();
    for &estimator in &spec.estimators {
        for &optimizer in &spec.optimizers {
            for lr in spec.learning_rates_for(optimizer) {
                for &sigma in &spec.sigmas {
                    let cs: Vec<f64> = match estimator {
                        EstimatorKind::Pgo => vec![0.0],
                        EstimatorKind::PgoDp => spec.c_factors.clone(),
                    };
                    for c_factor in cs {
                        keys.push(OptimConfigKey {
                            estimator,
                            optimizer,
                            learning_rate: lr,
                            sigma,
                            c_factor,
                        });
                    }
                }
            }
        }
    }
    keys
}

fn optimize_one<M: ObjectiveModel>(
    model: &M,
    spec: &ExperimentSpec,
    key: &OptimConfigKey,
) -> Result<MeanTrajectory> {
    let est_cfg =
        EstimatorConfig::new(key.sigma, key.c_factor)?.with_crn(spec.common_random_numbers);
    let mut cfg = OptimRunConfig::new(
        key.optimizer,
        key.learning_rate,
        key.estimator,
        est_cfg,
        spec.steps,
    )?;
    cfg.eval_budget = spec.eval_budget;
    cfg.objective_evals = spec.objective_evals;

    let runs: Vec<std::result::Result<Vec<TrajectoryPoint>, String>> =
        replicate(spec.reps, spec.seed, |rng| {
            let theta0 = random_start(model, rng);
            Ok(optim::run(model, &cfg, theta0, rng).map_err(|e| e.to_string()))
        })?;

    let errors: Vec<String> = runs
        .iter()
        .filter_map(|r| r.as_ref().err().cloned())
        .collect();
    let ok: Vec<&Vec<TrajectoryPoint>> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    let len = ok.iter().map(|t| t.len()).max().unwrap_or(0);
    let mut out = MeanTrajectory {
        key: key.clone(),
        evaluations: Vec::with_capacity(len),
        objective_mean: Vec::with_capacity(len),
        objective_ci: Vec::with_capacity(len),
        n: Vec::with_capacity(len),
        elapsed_mean: Vec::with_capacity(len),
        failed: errors.len(),
        errors,
        auc: f64::NAN,
    };
    for step in 0..len {
        let points: Vec<&TrajectoryPoint> = ok.iter().filter_map(|t| t.get(step)).collect();
        let values: Vec<f64> = points.iter().map(|p| p.objective).collect();
        let (m, ci) = mean_ci(&values);
        out.evaluations.push(points[0].evaluations);
        out.objective_mean.push(m);
        out.objective_ci.push(ci);
        out.n.push(points.len());
        out.elapsed_mean
            .push(points.iter().map(|p| p.elapsed_secs).sum::<f64>() / points.len() as f64);
    }
    if len > 0 {
        out.auc = trapezoid_auc(&out.evaluations, &out.objective_mean);
    }
    Ok(out)
}

fn optimize_with<M: ObjectiveModel>(
    model: &M,
    spec: &ExperimentSpec,
    negated: bool,
) -> Result<OptimizeOutput> {
    let trajectories = optimize_configs(spec)
        .iter()
        .map(|key| optimize_one(model, spec, key))
        .collect::<Result<Vec<_>>>()?;
    let mut output = OptimizeOutput {
        model: spec.model.clone(),
        negated,
        trajectories,
        improvement: improvement_report(None, None),
    };
    output.improvement = improvement_report(
        output.best(EstimatorKind::PgoDp),
        output.best(EstimatorKind::Pgo),
    );
    Ok(output)
}

/// Runs the full sweep. Maximization models are negated so that every
/// reported objective is minimized.
pub fn run_optimize(spec: &ExperimentSpec) -> Result<OptimizeOutput> {
    let model = spec.build_model()?;
    if model.maximizes() {
        optimize_with(&Negated(model), spec, true)
    } else {
        optimize_with(&model, spec, false)
    }
}

fn key_cells(model: &str, k: &OptimConfigKey) -> Vec<String> {
    vec![
        s(model),
        s(k.estimator),
        s(k.optimizer.as_str()),
        s(k.learning_rate),
        s(k.sigma),
        s(k.c_factor),
    ]
}

const KEY_COLUMNS: [&str; 6] = ["model", "estimator", "optimizer", "lr", "sigma", "c_factor"];

pub fn trajectory_table(out: &OptimizeOutput, timing: bool) -> Table {
    let mut header: Vec<&str> = KEY_COLUMNS.to_vec();
    header.extend(["step", "evals", "objective_mean", "objective_ci", "n"]);
    if timing {
        header.push("elapsed_mean_s");
    }
    let mut t = Table::new(&header);
    for tr in &out.trajectories {
        for step in 0..tr.evaluations.len() {
            let mut row = key_cells(&out.model, &tr.key);
            row.extend([
                s(step),
                s(tr.evaluations[step]),
                s(tr.objective_mean[step]),
                s(tr.objective_ci[step]),
                s(tr.n[step]),
            ]);
            if timing {
                row.push(s(tr.elapsed_mean[step]));
            }
            t.push(row);
        }
    }
    t
}

pub fn summary_table(out: &OptimizeOutput) -> Table {
    let mut header: Vec<&str> = KEY_COLUMNS.to_vec();
    header.extend(["negated", "auc", "final_mean", "final_ci", "failed", "best"]);
    let best_dp = out.best(EstimatorKind::PgoDp).map(|b| b.key.clone());
    let best_pgo = out.best(EstimatorKind::Pgo).map(|b| b.key.clone());
    let mut t = Table::new(&header);
    for tr in &out.trajectories {
        let best = Some(&tr.key) == best_dp.as_ref() || Some(&tr.key) == best_pgo.as_ref();
        let mut row = key_cells(&out.model, &tr.key);
        row.extend([
            s(out.negated),
            s(tr.auc),
            s(tr.final_mean()),
            s(tr.final_ci()),
            s(tr.failed),
            s(best),
        ]);
        t.push(row);
    }
    t
}

pub fn improvement_table(out: &OptimizeOutput) -> Table {
    let mut t = Table::new(&["model", "threshold", "pgo_dp_evals", "pgo_evals", "speedup"]);
    for r in &out.improvement.rows {
        t.push(vec![
            s(&out.model),
            s(r.threshold),
            opt_s(r.pgo_dp_evals),
            opt_s(r.pgo_evals),
            opt_s(r.speedup),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub sigma: f64,
    /// `(in-class, across-means)` variances divided by `σ²`.
    pub exp_in_class_var: f64,
    pub var_across_means: f64,
    pub p: f64,
    pub vrr_analytic: f64,
    pub vrr_measured: f64,
    pub n: usize,
}

/// Closed-form Heaviside VRR next to a Monte-Carlo measurement at full
/// coverage.
pub fn run_oracle(spec: &ExperimentSpec) -> Result<Vec<OracleRow>> {
    let model = Heaviside::new(vec![0.0])?;
    spec.sigmas
        .iter()
        .map(|&sigma| {
            let r = heaviside_vrr(sigma)?;
            let (a, b) = r.table_columns();
            let cfg = EstimatorConfig::new(sigma, crate::dgauss::FULL_COVERAGE_SIGMAS)?;
            Ok(OracleRow {
                sigma,
                exp_in_class_var: a,
                var_across_means: b,
                p: r.p,
                vrr_analytic: r.vrr,
                vrr_measured: measured_vrr(&model, &[0], &cfg, spec.reps, spec.seed)?,
                n: spec.reps,
            })
        })
        .collect()
}

pub fn oracle_table(rows: &[OracleRow]) -> Table {
    let mut t = Table::new(&[
        "sigma",
        "p",
        "exp_in_class_var",
        "var_across_means",
        "vrr_analytic",
        "vrr_measured",
        "n",
    ]);
    for r in rows {
        t.push(vec![
            s(r.sigma),
            s(r.p),
            s(r.exp_in_class_var),
            s(r.var_across_means),
            s(r.vrr_analytic),
            s(r.vrr_measured),
            s(r.n),
        ]);
    }
    t
}

/// Runs `spec.command` and returns its tables, each named by a suffix
/// (empty for the primary table).
pub fn run(spec: &ExperimentSpec) -> Result<Vec<(&'static str, Table)>> {
    Ok(match spec.command {
        Command::Verify => vec![("", verify_table(&run_verify(spec)?))],
        Command::Vrr => vec![("", vrr_table(&run_vrr(spec)?))],
        Command::Bench => vec![("", bench_table(&run_bench(spec)?))],
        Command::Oracle => vec![("", oracle_table(&run_oracle(spec)?))],
        Command::Optimize => {
            let out = run_optimize(spec)?;
            vec![
                ("", trajectory_table(&out, spec.timing)),
                ("_summary", summary_table(&out)),
                ("_improvement", improvement_table(&out)),
            ]
        }
    })
}

/// `<stem><suffix>.<ext>` next to `path`.
pub fn suffixed_path(path: &Path, suffix: &str) -> PathBuf {
    if suffix.is_empty() {
        return path.to_path_buf();
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}

/// Writes the tables to `spec.out` (secondary tables get suffixed names) or,
/// without an output path, to `stdout` separated by blank lines. Returns the
/// paths written.
pub fn write_outputs<W: Write>(
    spec: &ExperimentSpec,
    tables: &[(&'static str, Table)],
    mut stdout: W,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    match &spec.out {
        Some(path) => {
            for (suffix, table) in tables {
                let p = suffixed_path(path, suffix);
                table.write_path(&p)?;
                written.push(p);
            }
        }
        None => {
            for (i, (_, table)) in tables.iter().enumerate() {
                if i > 0 {
                    writeln!(stdout).map_err(|e| Error::io(Path::new("<stdout>"), e))?;
                }
                table.write_to(&mut stdout)?;
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(command: Command, pairs: &[(&str, &str)]) -> ExperimentSpec {
        let mut kv = KvMap::new();
        for (k, v) in pairs {
            kv.insert(*k, *v);
        }
        ExperimentSpec::from_kv(command, &kv).unwrap()
    }

    #[test]
    fn kv_overrides_defaults() {
        let s = spec(
            Command::Optimize,
            &[
                ("model", "dynamnews"),
                ("sigma", "1,2"),
                ("model.n_products", "4"),
                ("lr", "0.5"),
            ],
        );
        assert_eq!(s.model, "dynamnews");
        assert_eq!(s.sigmas, vec![1.0, 2.0]);
        assert_eq!(s.model_params.get("n_products"), Some("4"));
        assert_eq!(s.learning_rates_for(OptimizerKind::Adam), vec![0.5]);
        assert_eq!(s.reps, 30);
        let d = ExperimentSpec::defaults(Command::Optimize);
        assert_eq!(
            d.learning_rates_for(OptimizerKind::Gd),
            vec![0.001, 0.01, 0.05]
        );
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut kv = KvMap::new();
        kv.insert("reps", "0");
        assert!(ExperimentSpec::from_kv(Command::Vrr, &kv).is_err());
        let mut kv = KvMap::new();
        kv.insert("sigmaa", "1");
        assert!(ExperimentSpec::from_kv(Command::Vrr, &kv).is_err());
        let mut kv = KvMap::new();
        kv.insert("sigma", "-1");
        assert!(ExperimentSpec::from_kv(Command::Vrr, &kv).is_err());
        let mut kv = KvMap::new();
        kv.insert("bench_reps", "10");
        assert!(ExperimentSpec::from_kv(Command::Bench, &kv).is_err());
    }

    #[test]
    fn exact_verify_on_heaviside_is_zero() {
        let s = spec(
            Command::Verify,
            &[("exact", "true"), ("c_factor", "1,3,15")],
        );
        let rows = run_verify(&s).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().any(|r| r.c_factor == 15.0));
        for r in rows {
            assert!(r.mean_diff.abs() < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn linear_vrr_is_infinite() {
        let s = spec(
            Command::Vrr,
            &[("model", "linear"), ("reps", "200"), ("c_factor", "15")],
        );
        let rows = run_vrr(&s).unwrap();
        assert_eq!(rows[0].vrr, f64::INFINITY);
        let csv = vrr_table(&rows).to_csv_string().unwrap();
        assert_eq!(csv, "model,c_factor,sigma,vrr,n\nlinear,15,1,inf,200\n");
    }

    #[test]
    fn auc_and_quantiles() {
        assert_eq!(trapezoid_auc(&[0, 2, 4], &[1.0, 3.0, 3.0]), 4.0 + 6.0);
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.25), 2.0);
        assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
    }

    fn curve(estimator: EstimatorKind, ys: &[f64]) -> MeanTrajectory {
        let evaluations: Vec<u64> = (0..ys.len() as u64).map(|k| 2 * k).collect();
        MeanTrajectory {
            key: OptimConfigKey {
                estimator,
                optimizer: OptimizerKind::Gd,
                learning_rate: 0.1,
                sigma: 1.0,
                c_factor: 3.0,
            },
            auc: trapezoid_auc(&evaluations, ys),
            evaluations,
            objective_mean: ys.to_vec(),
            objective_ci: vec![0.0; ys.len()],
            n: vec![30; ys.len()],
            elapsed_mean: vec![0.0; ys.len()],
            failed: 0,
            errors: Vec::new(),
        }
    }

    #[test]
    fn improvement_thresholds_and_not_reached() {
        let dp = curve(EstimatorKind::PgoDp, &[10.0, 5.0, 2.0, 0.5, 0.0]);
        let pg = curve(EstimatorKind::Pgo, &[10.0, 8.0, 6.0, 2.0, 1.5]);
        let rep = improvement_report(Some(&dp), Some(&pg));
        assert_eq!((rep.y_start, rep.y_best), (10.0, 0.0));
        let r75 = &rep.rows[0];
        assert_eq!(
            (r75.pgo_dp_evals, r75.pgo_evals, r75.speedup),
            (Some(4), Some(6), Some(1.5))
        );
        let r99 = &rep.rows[3];
        assert_eq!(r99.pgo_dp_evals, Some(8));
        assert_eq!(r99.pgo_evals, None);
        assert_eq!(r99.speedup, None);
        for w in rep.rows.windows(2) {
            assert!(w[0].pgo_dp_evals <= w[1].pgo_dp_evals);
        }
    }

    #[test]
    fn flat_reference_never_reaches() {
        let dp = curve(EstimatorKind::PgoDp, &[1.0, 1.0]);
        let rep = improvement_report(Some(&dp), Some(&dp));
        assert!(rep.rows.iter().all(|r| r.pgo_dp_evals.is_none()));
    }

    #[test]
    fn zero_step_optimize() {
        let s = spec(
            Command::Optimize,
            &[
                ("model", "linear"),
                ("steps", "0"),
                ("reps", "3"),
                ("optimizer", "gd"),
                ("lr", "0.1"),
            ],
        );
        let out = run_optimize(&s).unwrap();
        assert_eq!(out.trajectories.len(), 2);
        for t in &out.trajectories {
            assert_eq!(t.evaluations, vec![0]);
            assert_eq!(t.n, vec![3]);
        }
        let imp = improvement_table(&out).to_csv_string().unwrap();
        assert!(imp.contains(NOT_REACHED));
    }

    #[test]
    fn random_starts_stay_in_bounds() {
        let m = AnyModel::from_kv("dynamnews", &KvMap::new()).unwrap();
        let (lo, hi) = m.bounds();
        let mut rng = replication_stream(1, 0);
        for _ in 0..100 {
            let x = random_start(&m, &mut rng);
            for i in 0..x.len() {
                assert!(x[i] >= lo[i] as f64 && x[i] <= hi[i] as f64);
            }
        }
    }

    #[test]
    fn suffix_paths() {
        assert_eq!(
            suffixed_path(Path::new("a/b.csv"), "_summary"),
            PathBuf::from("a/b_summary.csv")
        );
        assert_eq!(
            suffixed_path(Path::new("out"), "_x"),
            PathBuf::from("out_x")
        );
        assert_eq!(
            suffixed_path(Path::new("o.csv"), ""),
            PathBuf::from("o.csv")
        );
    }

    #[test]
    fn stdout_output_roundtrips() {
        let s = spec(Command::Verify, &[("exact", "true"), ("c_factor", "15")]);
        let tables = run(&s).unwrap();
        let mut buf = Vec::new();
        write_outputs(&s, &tables, &mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(rdr.headers().unwrap().len(), 6);
        let rec: Vec<csv::StringRecord> = rdr
            .records()
            .collect::<std::result::Result<_, _>>()
            .unwrap();
        assert_eq!(rec.len(), 1);
        assert!(rec[0][3].parse::<f64>().unwrap().abs() < 1e-9);
    }
}
