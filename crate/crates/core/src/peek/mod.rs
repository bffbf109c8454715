//! Perturbation-carrying arithmetic with control-flow equivalence tracking.
//!
//! A [`PeekContext`] turns an integer input `x` and a primal perturbation `R`
//! into one row of candidate values per dimension, `x_i - c ..= x_i + c`.
//! Lifted inputs are [`PeekScalar`]s; arithmetic on them propagates every row
//! element-wise. Comparisons go through a [`Tracer`], which for peeked runs is
//! the context itself: each comparison clears the mask bits of alternatives
//! whose outcome differs from the primal outcome.
//!
//! Models are written once against [`PeekNum`] and run unchanged with `f64`
//! (tracer: [`ScalarTracer`]) or with [`PeekScalar`] (tracer: [`PeekContext`]).

mod context;
mod ops;
mod scalar;

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

pub use context::PeekContext;
pub use scalar::{Dep, PeekScalar};

use crate::error::{Error, Result};

/// Comparison relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl Rel {
    #[inline]
    pub fn eval(self, a: f64, b: f64) -> bool {
        match self {
            Rel::Lt => a < b,
            Rel::Le => a <= b,
            Rel::Gt => a > b,
            Rel::Ge => a >= b,
            Rel::Eq => a == b,
            Rel::Ne => a != b,
        }
    }
}

/// One control-flow decision taken along a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Branch(bool),
    Index(i64),
}

/// Routes the decisions of a model through the evaluation backend.
///
/// Every branch or index computation that depends on a decision variable must
/// go through one of these methods; otherwise the equivalence masks of a
/// peeked run are not sound.
pub trait Tracer<V> {
    fn compare(&mut self, a: &V, rel: Rel, b: &V) -> bool;

    fn compare_scalar(&mut self, a: &V, rel: Rel, b: f64) -> bool;

    /// Rounds `a` to an integer for indexing or selection.
    fn to_index(&mut self, a: &V) -> Result<i64>;
}

/// Numbers a model can be evaluated with.
pub trait PeekNum:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
    + AddAssign
    + for<'a> AddAssign<&'a Self>
    + SubAssign
    + MulAssign
    + DivAssign
    + AddAssign<f64>
    + SubAssign<f64>
    + MulAssign<f64>
    + DivAssign<f64>
{
    type Tracer: Tracer<Self>;

    fn constant(v: f64) -> Self;
    fn primal(&self) -> f64;

    fn abs(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn floor(&self) -> Self;
    fn round(&self) -> Self;
    fn powf(&self, exponent: &Self) -> Self;
    fn min(&self, other: &Self) -> Self;
    fn max(&self, other: &Self) -> Self;
}

impl PeekNum for f64 {
    type Tracer = ScalarTracer;

    fn constant(v: f64) -> Self {
        v
    }
    fn primal(&self) -> f64 {
        *self
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn floor(&self) -> Self {
        f64::floor(*self)
    }
    fn round(&self) -> Self {
        f64::round(*self)
    }
    fn powf(&self, exponent: &Self) -> Self {
        f64::powf(*self, *exponent)
    }
    fn min(&self, other: &Self) -> Self {
        f64::min(*self, *other)
    }
    fn max(&self, other: &Self) -> Self {
        f64::max(*self, *other)
    }
}

/// Tracer for plain scalar runs; optionally logs every decision.
#[derive(Debug, Clone, Default)]
pub struct ScalarTracer {
    log: Option<Vec<Decision>>,
}

impl ScalarTracer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn logging() -> Self {
        Self {
            log: Some(Vec::new()),
        }
    }

    pub fn decisions(&self) -> Option<&[Decision]> {
        self.log.as_deref()
    }

    fn record(&mut self, d: Decision) {
        if let Some(log) = &mut self.log {
            log.push(d);
        }
    }
}

impl Tracer<f64> for ScalarTracer {
    fn compare(&mut self, a: &f64, rel: Rel, b: &f64) -> bool {
        let t = rel.eval(*a, *b);
        self.record(Decision::Branch(t));
        t
    }

    fn compare_scalar(&mut self, a: &f64, rel: Rel, b: f64) -> bool {
        self.compare(a, rel, &b)
    }

    fn to_index(&mut self, a: &f64) -> Result<i64> {
        if !a.is_finite() {
            return Err(Error::NonFiniteIndex(*a));
        }
        let idx = a.round() as i64;
        self.record(Decision::Index(idx));
        Ok(idx)
    }
}
