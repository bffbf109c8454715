//! Forward-difference gradient estimation with rounded Gaussian perturbations
//! (PGO) and its dimensional-peeking variant (PGO-DP).
//!
//! PGO: `g_i = (f(x + R) - f(x)) R_i / σ²`.
//!
//! PGO-DP replaces, per dimension, the single perturbation `R_i` by every
//! perturbation `o` in the radius whose control flow matches the primal one
//! (the set `S`), weighted by the perturbation law:
//!
//! `g_i = Σ_{o∈S} P(o) (f_{-i}(x_i + o) - f(x)) o / (σ² P(S))`.
//!
//! Dimensions whose primal perturbation falls outside the radius use the PGO
//! formula.

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dgauss::DiscreteGaussianSpec;
use crate::error::{Error, Result};
use crate::models::{check_dim, ObjectiveModel};
use crate::peek::{PeekContext, ScalarTracer};
use crate::stream::{replication_stream, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Pgo,
    PgoDp,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Pgo => "pgo",
            EstimatorKind::PgoDp => "pgo_dp",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgo" => Ok(EstimatorKind::Pgo),
            "pgo_dp" | "pgo-dp" => Ok(EstimatorKind::PgoDp),
            other => Err(Error::Config(format!("unknown estimator '{other}'"))),
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    spec: DiscreteGaussianSpec,
    c_factor: f64,
    radius: usize,
    common_random_numbers: bool,
    pmf: Vec<f64>,
}

impl EstimatorConfig {
    /// Coverage radius `c = ceil(c_factor · σ)`; common random numbers on.
    pub fn new(sigma: f64, c_factor: f64) -> Result<Self> {
        let spec = DiscreteGaussianSpec::new(sigma)?;
        if !c_factor.is_finite() || c_factor < 0.0 {
            return Err(Error::Config(format!(
                "c_factor must be finite and >= 0, got {c_factor}"
            )));
        }
        let radius = (c_factor * sigma).ceil() as usize;
        Ok(Self {
            spec,
            c_factor,
            radius,
            common_random_numbers: true,
            pmf: spec.pmf_table(radius as i64),
        })
    }

    pub fn with_crn(mut self, common_random_numbers: bool) -> Self {
        self.common_random_numbers = common_random_numbers;
        self
    }

    pub fn sigma(&self) -> f64 {
        self.spec.sigma()
    }

    pub fn c_factor(&self) -> f64 {
        self.c_factor
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn common_random_numbers(&self) -> bool {
        self.common_random_numbers
    }

    pub fn spec(&self) -> &DiscreteGaussianSpec {
        &self.spec
    }
}

/// Seeds of the model's random streams: `base` for `f(x)`, `perturbed` for
/// `f(x + R)` and all peeked alternatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Realizations {
    pub base: u64,
    pub perturbed: u64,
}

impl Realizations {
    pub fn common(seed: u64) -> Self {
        Self {
            base: seed,
            perturbed: seed,
        }
    }

    /// Always consumes two words so that CRN and independent runs stay
    /// aligned on the same stream.
    pub fn draw<R: RngCore + ?Sized>(rng: &mut R, common: bool) -> Self {
        let perturbed = rng.next_u64();
        let independent = rng.next_u64();
        Self {
            base: if common { perturbed } else { independent },
            perturbed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub partials: Vec<f64>,
    /// `false` marks dimensions estimated with the plain PGO formula.
    pub peeked: Vec<bool>,
    pub draw: Vec<i64>,
    /// `f(x + R)`.
    pub primal_output: f64,
    /// `f(x)`.
    pub baseline_output: f64,
}

fn baseline<M: ObjectiveModel + ?Sized>(model: &M, x: &[i64], seed: u64) -> Result<f64> {
    let input: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    model.evaluate(&input, &mut ScalarTracer::new(), &mut SimRng::new(seed))
}

/// PGO at a given perturbation and realization.
pub fn pgo_at<M: ObjectiveModel + ?Sized>(
    model: &M,
    x: &[i64],
    draw: &[i64],
    cfg: &EstimatorConfig,
    omega: Realizations,
) -> Result<GradientEstimate> {
    check_dim(model.dim(), x.len())?;
    check_dim(x.len(), draw.len())?;
    let perturbed: Vec<f64> = x.iter().zip(draw).map(|(a, r)| (a + r) as f64).collect();
    let y1 = model.evaluate(
        &perturbed,
        &mut ScalarTracer::new(),
        &mut SimRng::new(omega.perturbed),
    )?;
    let y0 = baseline(model, x, omega.base)?;
    let s2 = cfg.sigma() * cfg.sigma();
    Ok(GradientEstimate {
        partials: draw.iter().map(|&r| (y1 - y0) * r as f64 / s2).collect(),
        peeked: vec![false; x.len()],
        draw: draw.to_vec(),
        primal_output: y1,
        baseline_output: y0,
    })
}

/// PGO-DP at a given perturbation and realization.
pub fn pgo_dp_at<M: ObjectiveModel + ?Sized>(
    model: &M,
    x: &[i64],
    draw: &[i64],
    cfg: &EstimatorConfig,
    omega: Realizations,
) -> Result<GradientEstimate> {
    check_dim(model.dim(), x.len())?;
    let mut ctx = PeekContext::new(x, draw, cfg.radius())?;
    let inputs = ctx.lift_all();
    let out = model.evaluate(&inputs, &mut ctx, &mut SimRng::new(omega.perturbed))?;
    let y1 = out.primal();
    let y0 = baseline(model, x, omega.base)?;
    let s2 = cfg.sigma() * cfg.sigma();
    let c = cfg.radius() as i64;

    let mut partials = Vec::with_capacity(x.len());
    for (i, &r) in draw.iter().enumerate() {
        if !ctx.is_peeked(i) {
            partials.push((y1 - y0) * r as f64 / s2);
            continue;
        }
        let (row, mask) = ctx.extract(&out, i)?;
        let mut num = 0.0;
        let mut mass = 0.0;
        for (k, ((&v, &keep), &p)) in row.iter().zip(&mask).zip(&cfg.pmf).enumerate() {
            if keep {
                let o = k as i64 - c;
                num += p * (v - y0) * o as f64;
                mass += p;
            }
        }
        partials.push(num / (s2 * mass));
    }
    Ok(GradientEstimate {
        partials,
        peeked: ctx.peeked_flags().to_vec(),
        draw: draw.to_vec(),
        primal_output: y1,
        baseline_output: y0,
    })
}

pub fn estimate_at<M: ObjectiveModel + ?Sized>(
    kind: EstimatorKind,
    model: &M,
    x: &[i64],
    draw: &[i64],
    cfg: &EstimatorConfig,
    omega: Realizations,
) -> Result<GradientEstimate> {
    match kind {
        EstimatorKind::Pgo => pgo_at(model, x, draw, cfg, omega),
        EstimatorKind::PgoDp => pgo_dp_at(model, x, draw, cfg, omega),
    }
}

/// Samples `R` and the realizations from `rng`, then estimates. Both kinds
/// consume `rng` identically, so equal stream states give paired estimates.
pub fn estimate<M: ObjectiveModel + ?Sized, R: Rng + ?Sized>(
    kind: EstimatorKind,
    model: &M,
    x: &[i64],
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<GradientEstimate> {
    let draw = cfg.spec().sample_vec(x.len(), rng);
    let omega = Realizations::draw(rng, cfg.common_random_numbers());
    estimate_at(kind, model, x, &draw, cfg, omega)
}

pub fn pgo<M: ObjectiveModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    x: &[i64],
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<GradientEstimate> {
    estimate(EstimatorKind::Pgo, model, x, cfg, rng)
}

pub fn pgo_dp<M: ObjectiveModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    x: &[i64],
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<GradientEstimate> {
    estimate(EstimatorKind::PgoDp, model, x, cfg, rng)
}

/// Exact per-dimension mean and variance of an estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMoments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Number of enumerated perturbation vectors.
    pub cells: usize,
}

/// Largest enumeration [`expectation_oracle`] accepts.
pub const ORACLE_BUDGET: u128 = 4_000_000;

/// Exact moments of an estimator on a deterministic model by enumerating
/// every `R ∈ [-T, T]^d`, `T` the truncation radius, with product pmf
/// weights.
pub fn expectation_oracle<M: ObjectiveModel + ?Sized>(
    model: &M,
    x: &[i64],
    cfg: &EstimatorConfig,
    kind: EstimatorKind,
) -> Result<OracleMoments> {
    expectation_oracle_with_budget(model, x, cfg, kind, ORACLE_BUDGET)
}

pub fn expectation_oracle_with_budget<M: ObjectiveModel + ?Sized>(
    model: &M,
    x: &[i64],
    cfg: &EstimatorConfig,
    kind: EstimatorKind,
    budget: u128,
) -> Result<OracleMoments> {
    let d = model.dim();
    check_dim(d, x.len())?;
    if model.is_stochastic() {
        return Err(Error::Config(format!(
            "expectation oracle needs a deterministic model, '{}' is stochastic",
            model.name()
        )));
    }
    let t = cfg.spec().trunc_radius();
    let width = (2 * t + 1) as u128;
    let cells = width.checked_pow(d as u32).unwrap_or(u128::MAX);
    if cells > budget {
        return Err(Error::EnumerationBudget { cells, budget });
    }
    let pmf = cfg.spec().pmf_table(t);
    let omega = Realizations::common(0);

    let mut draw = vec![-t; d];
    let mut weights = Vec::with_capacity(cells as usize);
    let mut values = Vec::with_capacity(cells as usize);
    loop {
        let w: f64 = draw.iter().map(|&r| pmf[(r + t) as usize]).product();
        values.push(estimate_at(kind, model, x, &draw, cfg, omega)?.partials);
        weights.push(w);
        // odometer, last dimension fastest
        let mut pos = d;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            if draw[pos] < t {
                draw[pos] += 1;
                break;
            }
            draw[pos] = -t;
        }
        if draw.iter().all(|&r| r == -t) {
            break;
        }
    }

    let mut mean = vec![0.0; d];
    for (w, g) in weights.iter().zip(&values) {
        for (m, v) in mean.iter_mut().zip(g) {
            *m += w * v;
        }
    }
    let mut variance = vec![0.0; d];
    for (w, g) in weights.iter().zip(&values) {
        for ((s, v), m) in variance.iter_mut().zip(g).zip(&mean) {
            *s += w * (v - m) * (v - m);
        }
    }
    Ok(OracleMoments {
        mean,
        variance,
        cells: values.len(),
    })
}

/// Per-dimension sample mean and unbiased sample variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub n: usize,
}

impl Moments {
    /// Welford accumulation in sample order.
    pub fn from_samples<S: AsRef<[f64]>>(samples: &[S]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::Config(format!(
                "need at least 2 replications, got {n}"
            )));
        }
        let d = samples[0].as_ref().len();
        let mut mean = vec![0.0; d];
        let mut m2 = vec![0.0; d];
        for (k, s) in samples.iter().enumerate() {
            let s = s.as_ref();
            check_dim(d, s.len())?;
            let kf = (k + 1) as f64;
            for ((m, q), &v) in mean.iter_mut().zip(m2.iter_mut()).zip(s) {
                let delta = v - *m;
                *m += delta / kf;
                *q += delta * (v - *m);
            }
        }
        let variance = m2.into_iter().map(|q| q / (n - 1) as f64).collect();
        Ok(Self { mean, variance, n })
    }

    /// Standard error of each mean.
    pub fn std_error(&self) -> Vec<f64> {
        self.variance
            .iter()
            .map(|v| (v / self.n as f64).sqrt())
            .collect()
    }
}

/// Runs `f` once per replication on its own stream (see
/// [`replication_stream`]); results come back in replication order.
pub fn replicate<T, F>(n: usize, master_seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync,
{
    (0..n as u64)
        .into_par_iter()
        .map(|k| f(&mut replication_stream(master_seed, k)))
        .collect()
}

/// Sample moments of `n` independent estimates.
pub fn moments<F>(estimate_fn: F, n: usize, master_seed: u64) -> Result<Moments>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Vec<f64>> + Sync,
{
    let samples = replicate(n, master_seed, estimate_fn)?;
    Moments::from_samples(&samples)
}

/// PGO and PGO-DP estimates computed from identical draws.
#[derive(Debug, Clone)]
pub struct PairedSamples {
    pub pgo: Vec<Vec<f64>>,
    pub pgo_dp: Vec<Vec<f64>>,
}

pub fn paired_samples<M: ObjectiveModel + ?Sized>(
    model: &M,
    x: &[i64],
    cfg: &EstimatorConfig,
    n: usize,
    master_seed: u64,
) -> Result<PairedSamples> {
    let pairs = replicate(n, master_seed, |rng| {
        let draw = cfg.spec().sample_vec(x.len(), rng);
        let omega = Realizations::draw(rng, cfg.common_random_numbers());
        let a = pgo_at(model, x, &draw, cfg, omega)?;
        let b = pgo_dp_at(model, x, &draw, cfg, omega)?;
        Ok((a.partials, b.partials))
    })?;
    let (pgo, pgo_dp) = pairs.into_iter().unzip();
    Ok(PairedSamples { pgo, pgo_dp })
}
