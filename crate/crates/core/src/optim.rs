//! First-order optimizers driven by gradient estimates over integer inputs.
//!
//! The iterate is continuous; each step evaluates the model at the iterate
//! rounded half away from zero and clamped to the model bounds.

use std::time::Instant;

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorConfig, EstimatorKind};
use crate::models::{check_dim, ObjectiveModel};
use crate::peek::ScalarTracer;
use crate::stream::SimRng;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Model evaluations consumed by one gradient estimate (perturbed + base).
pub const EVALS_PER_ESTIMATE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OptimizerKind {
    Gd,
    Adam,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Gd => "gd",
            OptimizerKind::Adam => "adam",
        }
    }

    /// Learning-rate sweep used when none is configured.
    pub fn default_learning_rates(self) -> &'static [f64] {
        match self {
            OptimizerKind::Gd => &[0.001, 0.01, 0.05],
            OptimizerKind::Adam => &[0.01, 0.05, 0.1],
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(OptimizerKind::Gd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub theta: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl IterateState {
    pub fn new(theta: Vec<f64>) -> Self {
        let d = theta.len();
        Self {
            theta,
            m: vec![0.0; d],
            v: vec![0.0; d],
            t: 0,
        }
    }

    fn check(&self, g: &[f64]) -> Result<()> {
        check_dim(self.theta.len(), g.len())?;
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(i));
        }
        Ok(())
    }
}

pub fn gd_step(state: &mut IterateState, g: &[f64], lr: f64) -> Result<()> {
    state.check(g)?;
    for (th, gi) in state.theta.iter_mut().zip(g) {
        *th -= lr * gi;
    }
    state.t += 1;
    Ok(())
}

pub fn adam_step(state: &mut IterateState, g: &[f64], lr: f64) -> Result<()> {
    state.check(g)?;
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..g.len() {
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g[i];
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        state.theta[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Rounds half away from zero and clamps into `[lower, upper]`.
pub fn project(theta: &[f64], lower: &[i64], upper: &[i64]) -> Vec<i64> {
    theta
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(t, (&lo, &hi))| (t.round() as i64).clamp(lo, hi))
        .collect()
}

#[derive(Debug, Clone)]
pub struct OptimRunConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub estimator: EstimatorKind,
    pub estimator_config: EstimatorConfig,
    pub steps: usize,
    /// Stop once this many model evaluations were spent on estimates.
    pub eval_budget: Option<u64>,
    /// Model evaluations averaged for each recorded objective value.
    pub objective_evals: usize,
}

impl OptimRunConfig {
    pub fn new(
        optimizer: OptimizerKind,
        learning_rate: f64,
        estimator: EstimatorKind,
        estimator_config: EstimatorConfig,
        steps: usize,
    ) -> Result<Self> {
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        Ok(Self {
            optimizer,
            learning_rate,
            estimator,
            estimator_config,
            steps,
            eval_budget: None,
            objective_evals: 1,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub step: usize,
    /// Model evaluations spent on gradient estimates so far.
    pub evaluations: u64,
    pub elapsed_secs: f64,
    pub objective: f64,
    pub theta: Vec<f64>,
}

/// Minimizes `model` from `theta0`. Draws perturbations, realizations and the
/// objective-reporting streams from `rng` in a fixed order per step.
pub fn run<M: ObjectiveModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    cfg: &OptimRunConfig,
    theta0: Vec<f64>,
    rng: &mut R,
) -> Result<Vec<TrajectoryPoint>> {
    check_dim(model.dim(), theta0.len())?;
    let (lower, upper) = model.bounds();
    let start = Instant::now();
    let mut state = IterateState::new(theta0);
    let mut evaluations = 0u64;

    let observe =
        |state: &IterateState, evaluations: u64, rng: &mut R| -> Result<TrajectoryPoint> {
            let x = project(&state.theta, &lower, &upper);
            let input: Vec<f64> = x.iter().map(|&v| v as f64).collect();
            let mut total = 0.0;
            for _ in 0..cfg.objective_evals.max(1) {
                let seed = rng.next_u64();
                total +=
                    model.evaluate(&input, &mut ScalarTracer::new(), &mut SimRng::new(seed))?;
            }
            Ok(TrajectoryPoint {
                step: state.t as usize,
                evaluations,
                elapsed_secs: start.elapsed().as_secs_f64(),
                objective: total / cfg.objective_evals.max(1) as f64,
                theta: state.theta.clone(),
            })
        };

    let mut trajectory = vec![observe(&state, evaluations, rng)?];
    for _ in 0..cfg.steps {
        if cfg
            .eval_budget
            .is_some_and(|b| evaluations + EVALS_PER_ESTIMATE > b)
        {
            break;
        }
        let x = project(&state.theta, &lower, &upper);
        let g = estimate(cfg.estimator, model, &x, &cfg.estimator_config, rng)?;
        evaluations += EVALS_PER_ESTIMATE;
        match cfg.optimizer {
            OptimizerKind::Gd => gd_step(&mut state, &g.partials, cfg.learning_rate)?,
            OptimizerKind::Adam => adam_step(&mut state, &g.partials, cfg.learning_rate)?,
        }
        trajectory.push(observe(&state, evaluations, rng)?);
    }
    Ok(trajectory)
}
