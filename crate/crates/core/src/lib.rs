//! Dimensional peeking for zeroth-order gradient estimation over discrete
//! simulations.
//!
//! A simulation written against [`peek::PeekNum`] can be evaluated either with
//! plain `f64` values or with [`peek::PeekScalar`] values. The latter carry,
//! next to the primal perturbed value, one row of alternative values per input
//! dimension the value depends on. Comparisons record which alternatives
//! follow the same control flow as the primal input; the
//! [`estimators::pgo_dp`] estimator then aggregates every control-flow
//! equivalent perturbation with its exact probability.
//!
//! Modules:
//!
//! - [`dgauss`]: the rounded Gaussian perturbation law.
//! - [`peek`]: the perturbation-carrying scalar and its evaluation context.
//! - [`estimators`]: PGO, PGO-DP and brute-force expectation oracles.
//! - [`models`]: benchmark objectives (Heaviside, linear, newsvendor, hotel).
//! - [`optim`]: gradient descent and Adam driven by gradient estimates.
//! - [`oracle`]: closed-form variance analysis of the Heaviside step.
//! - [`harness`]: experiment drivers behind the `peekgrad` CLI.

pub mod dgauss;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod kv;
pub mod models;
pub mod optim;
pub mod oracle;
pub mod peek;
pub mod stream;

pub use dgauss::DiscreteGaussianSpec;
pub use error::{Error, Result};
pub use estimators::{EstimatorConfig, EstimatorKind, GradientEstimate};
pub use models::ObjectiveModel;
pub use peek::{PeekContext, PeekNum, PeekScalar, Rel, Tracer};
pub use stream::SimRng;
