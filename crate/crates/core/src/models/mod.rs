//! Benchmark objectives written once against [`PeekNum`].
//!
//! Every model draws its random numbers along the primal path in an order
//! that does not depend on the decision values, and routes every
//! decision-dependent branch through the [`Tracer`](crate::peek::Tracer).

mod dynamnews;
mod hotel;
mod simple;

pub use dynamnews::{DynamNews, DynamNewsParams, DynamNewsStats};
pub use hotel::{Hotel, HotelParams, HotelProduct, HotelStats};
pub use simple::{Branchy, Heaviside, Linear};

use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::peek::{PeekNum, ScalarTracer};
use crate::stream::SimRng;

/// An objective `f: Z^d -> R`, optionally stochastic.
pub trait ObjectiveModel: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Inclusive lower and upper bounds of the decision vector.
    fn bounds(&self) -> (Vec<i64>, Vec<i64>);

    fn is_stochastic(&self) -> bool;

    /// Point used by the estimator experiments when none is given.
    fn default_point(&self) -> Vec<i64>;

    fn evaluate<V: PeekNum>(&self, x: &[V], tracer: &mut V::Tracer, rng: &mut SimRng) -> Result<V>;
}

/// Plain scalar evaluation at an integer point under stream `seed`.
pub fn evaluate_scalar<M: ObjectiveModel + ?Sized>(model: &M, x: &[i64], seed: u64) -> Result<f64> {
    check_dim(model.dim(), x.len())?;
    let input: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    model.evaluate(&input, &mut ScalarTracer::new(), &mut SimRng::new(seed))
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Flips the sign of a model's output, turning maximization into
/// minimization.
#[derive(Debug, Clone)]
pub struct Negated<M>(pub M);

impl<M: ObjectiveModel> ObjectiveModel for Negated<M> {
    fn name(&self) -> &str {
        self.0.name()
    }
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn bounds(&self) -> (Vec<i64>, Vec<i64>) {
        self.0.bounds()
    }
    fn is_stochastic(&self) -> bool {
        self.0.is_stochastic()
    }
    fn default_point(&self) -> Vec<i64> {
        self.0.default_point()
    }
    fn evaluate<V: PeekNum>(&self, x: &[V], tracer: &mut V::Tracer, rng: &mut SimRng) -> Result<V> {
        Ok(-self.0.evaluate(x, tracer, rng)?)
    }
}

/// Any of the built-in models, selected by name.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Heaviside(Heaviside),
    Linear(Linear),
    Branchy(Branchy),
    DynamNews(DynamNews),
    Hotel(Hotel),
}

pub const MODEL_NAMES: &[&str] = &["heaviside", "linear", "branchy", "dynamnews", "hotel"];

impl AnyModel {
    /// Builds a model from its name and `key = value` parameters.
    pub fn from_kv(name: &str, params: &KvMap) -> Result<Self> {
        Ok(match name {
            "heaviside" => AnyModel::Heaviside(Heaviside::from_kv(params)?),
            "linear" => AnyModel::Linear(Linear::from_kv(params)?),
            "branchy" => AnyModel::Branchy(Branchy),
            "dynamnews" => AnyModel::DynamNews(DynamNews::new(DynamNewsParams::from_kv(params)?)?),
            "hotel" => AnyModel::Hotel(Hotel::new(HotelParams::from_kv(params)?)?),
            other => {
                return Err(Error::Config(format!(
                    "unknown model '{other}', expected one of {}",
                    MODEL_NAMES.join(", ")
                )))
            }
        })
    }

    /// Whether the model's natural objective is maximized.
    pub fn maximizes(&self) -> bool {
        matches!(self, AnyModel::DynamNews(_) | AnyModel::Hotel(_))
    }
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            AnyModel::Heaviside($m) => $e,
            AnyModel::Linear($m) => $e,
            AnyModel::Branchy($m) => $e,
            AnyModel::DynamNews($m) => $e,
            AnyModel::Hotel($m) => $e,
        }
    };
}

impl ObjectiveModel for AnyModel {
    fn name(&self) -> &str {
        dispatch!(self, m => m.name())
    }
    fn dim(&self) -> usize {
        dispatch!(self, m => m.dim())
    }
    fn bounds(&self) -> (Vec<i64>, Vec<i64>) {
        dispatch!(self, m => m.bounds())
    }
    fn is_stochastic(&self) -> bool {
        dispatch!(self, m => m.is_stochastic())
    }
    fn default_point(&self) -> Vec<i64> {
        dispatch!(self, m => m.default_point())
    }
    fn evaluate<V: PeekNum>(&self, x: &[V], tracer: &mut V::Tracer, rng: &mut SimRng) -> Result<V> {
        dispatch!(self, m => m.evaluate(x, tracer, rng))
    }
}
