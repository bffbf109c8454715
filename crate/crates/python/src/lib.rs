//! Python bindings: discrete Gaussian helpers, peekable arithmetic, the
//! benchmark models, both gradient estimators and the experiment harness.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use peekgrad_core::estimators::{self, expectation_oracle as oracle_moments};
use peekgrad_core::harness::{self, Command, ExperimentSpec};
use peekgrad_core::kv::KvMap;
use peekgrad_core::models::{evaluate_scalar, AnyModel, ObjectiveModel};
use peekgrad_core::peek::{Rel, Tracer};
use peekgrad_core::stream::replication_stream;
use peekgrad_core::{DiscreteGaussianSpec, EstimatorConfig, EstimatorKind};

fn err(e: peekgrad_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn kv_from(params: Option<&Bound<'_, PyAny>>) -> PyResult<KvMap> {
    let mut kv = KvMap::new();
    if let Some(p) = params {
        let map: BTreeMap<String, Bound<'_, PyAny>> = p.extract()?;
        for (k, v) in map {
            let text = match v.extract::<Vec<f64>>() {
                Ok(list) => list
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
                Err(_) => v.str()?.to_string(),
            };
            kv.insert(k, text);
        }
    }
    Ok(kv)
}

fn parse_kind(kind: &str) -> PyResult<EstimatorKind> {
    kind.parse().map_err(err)
}

fn parse_rel(rel: &str) -> PyResult<Rel> {
    Ok(match rel {
        "<" => Rel::Lt,
        "<=" => Rel::Le,
        ">" => Rel::Gt,
        ">=" => Rel::Ge,
        "==" => Rel::Eq,
        "!=" => Rel::Ne,
        other => return Err(PyValueError::new_err(format!("unknown relation '{other}'"))),
    })
}

/// Rounded-Gaussian probability of the integer offset `r`.
#[pyfunction]
fn pmf(sigma: f64, r: i64) -> PyResult<f64> {
    Ok(DiscreteGaussianSpec::new(sigma).map_err(err)?.pmf(r))
}

/// Total probability of a set of offsets.
#[pyfunction]
fn mass(sigma: f64, offsets: Vec<i64>) -> PyResult<f64> {
    Ok(DiscreteGaussianSpec::new(sigma).map_err(err)?.mass(offsets))
}

/// `d` rounded-Gaussian draws from stream `seed`.
#[pyfunction]
fn sample(sigma: f64, d: usize, seed: u64) -> PyResult<Vec<i64>> {
    let spec = DiscreteGaussianSpec::new(sigma).map_err(err)?;
    Ok(spec.sample_vec(d, &mut replication_stream(seed, 0)))
}

/// Closed-form Heaviside variance split as a dict.
#[pyfunction]
fn heaviside_vrr(sigma: f64) -> PyResult<BTreeMap<&'static str, f64>> {
    let r = peekgrad_core::oracle::heaviside_vrr(sigma).map_err(err)?;
    Ok(BTreeMap::from([
        ("sigma", r.sigma),
        ("p", r.p),
        ("q", r.q),
        ("mu_neg", r.mu_neg),
        ("var_neg", r.var_neg),
        ("exp_in_class_var", r.exp_in_class_var),
        ("var_across_means", r.var_across_means),
        ("var_pgo", r.var_pgo),
        ("vrr", r.vrr),
    ]))
}

#[pyclass(name = "PeekScalar", module = "peekgrad", from_py_object)]
#[derive(Clone)]
struct PyPeekScalar(peekgrad_core::PeekScalar);

#[derive(FromPyObject)]
enum Operand {
    Peek(PyPeekScalar),
    Num(f64),
}

impl Operand {
    fn into_inner(self) -> peekgrad_core::PeekScalar {
        match self {
            Operand::Peek(p) => p.0,
            Operand::Num(v) => peekgrad_core::PeekScalar::constant(v),
        }
    }
}

#[pymethods]
impl PyPeekScalar {
    #[new]
    fn new(value: f64) -> Self {
        Self(peekgrad_core::PeekScalar::constant(value))
    }

    #[getter]
    fn primal(&self) -> f64 {
        self.0.primal()
    }

    /// Dimensions this value depends on.
    fn deps(&self) -> Vec<usize> {
        self.0.deps().iter().map(|d| d.dim()).collect()
    }

    fn row(&self, dim: usize) -> Option<Vec<f64>> {
        self.0.row(dim).map(<[f64]>::to_vec)
    }

    fn __add__(&self, o: Operand) -> Self {
        Self(&self.0 + &o.into_inner())
    }
    fn __radd__(&self, o: Operand) -> Self {
        Self(o.into_inner() + &self.0)
    }
    fn __sub__(&self, o: Operand) -> Self {
        Self(&self.0 - &o.into_inner())
    }
    fn __rsub__(&self, o: Operand) -> Self {
        Self(o.into_inner() - &self.0)
    }
    fn __mul__(&self, o: Operand) -> Self {
        Self(&self.0 * &o.into_inner())
    }
    fn __rmul__(&self, o: Operand) -> Self {
        Self(o.into_inner() * &self.0)
    }
    fn __truediv__(&self, o: Operand) -> Self {
        Self(&self.0 / &o.into_inner())
    }
    fn __rtruediv__(&self, o: Operand) -> Self {
        Self(o.into_inner() / &self.0)
    }
    fn __neg__(&self) -> Self {
        Self(-&self.0)
    }

    fn __repr__(&self) -> String {
        format!("PeekScalar({}, deps={:?})", self.0.primal(), self.deps())
    }
}

/// Peeking state of one evaluation: grids, masks and comparisons.
#[pyclass(name = "PeekContext", module = "peekgrad")]
struct PyPeekContext(peekgrad_core::PeekContext);

#[pymethods]
impl PyPeekContext {
    #[new]
    fn new(x: Vec<i64>, draw: Vec<i64>, radius: usize) -> PyResult<Self> {
        Ok(Self(
            peekgrad_core::PeekContext::new(&x, &draw, radius).map_err(err)?,
        ))
    }

    fn lift_all(&self) -> Vec<PyPeekScalar> {
        self.0.lift_all().into_iter().map(PyPeekScalar).collect()
    }

    fn grid(&self, i: usize) -> Vec<i64> {
        self.0.grid(i)
    }

    fn mask(&self, i: usize) -> Vec<bool> {
        self.0.mask(i).to_vec()
    }

    fn is_peeked(&self, i: usize) -> bool {
        self.0.is_peeked(i)
    }

    /// Primal outcome of `a rel b`; clears mask bits that disagree.
    fn compare(&mut self, a: PyPeekScalar, rel: &str, b: Operand) -> PyResult<bool> {
        let rel = parse_rel(rel)?;
        Ok(match b {
            Operand::Num(v) => self.0.compare_scalar(&a.0, rel, v),
            Operand::Peek(p) => self.0.compare(&a.0, rel, &p.0),
        })
    }

    /// `(values, mask)` of `value` along dimension `i`.
    fn extract(&self, value: PyPeekScalar, i: usize) -> PyResult<(Vec<f64>, Vec<bool>)> {
        self.0.extract(&value.0, i).map_err(err)
    }
}

/// A benchmark model built from its name and a dict of parameters.
#[pyclass(name = "Model", module = "peekgrad")]
struct PyModel(AnyModel);

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (name, params = None))]
    fn new(name: &str, params: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        Ok(Self(AnyModel::from_kv(name, &kv_from(params)?).map_err(err)?))
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn stochastic(&self) -> bool {
        self.0.is_stochastic()
    }

    fn bounds(&self) -> (Vec<i64>, Vec<i64>) {
        self.0.bounds()
    }

    fn default_point(&self) -> Vec<i64> {
        self.0.default_point()
    }

    #[pyo3(signature = (x, seed = 0))]
    fn evaluate(&self, x: Vec<i64>, seed: u64) -> PyResult<f64> {
        evaluate_scalar(&self.0, &x, seed).map_err(err)
    }
}

/// One gradient estimate as a dict with `partials`, `peeked`, `draw`,
/// `primal_output` and `baseline_output`.
#[pyfunction]
#[pyo3(signature = (model, x, kind = "pgo_dp", sigma = 1.0, c_factor = 3.0, seed = 0, crn = true))]
fn estimate<'py>(
    py: Python<'py>,
    model: &PyModel,
    x: Vec<i64>,
    kind: &str,
    sigma: f64,
    c_factor: f64,
    seed: u64,
    crn: bool,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let cfg = EstimatorConfig::new(sigma, c_factor)
        .map_err(err)?
        .with_crn(crn);
    let g = estimators::estimate(
        parse_kind(kind)?,
        &model.0,
        &x,
        &cfg,
        &mut replication_stream(seed, 0),
    )
    .map_err(err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("partials", g.partials)?;
    d.set_item("peeked", g.peeked)?;
    d.set_item("draw", g.draw)?;
    d.set_item("primal_output", g.primal_output)?;
    d.set_item("baseline_output", g.baseline_output)?;
    Ok(d)
}

/// Exact per-dimension `(mean, variance)` of an estimator on a
/// deterministic model.
#[pyfunction]
#[pyo3(signature = (model, x, kind, sigma = 1.0, c_factor = 15.0))]
fn expectation_oracle(
    model: &PyModel,
    x: Vec<i64>,
    kind: &str,
    sigma: f64,
    c_factor: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let cfg = EstimatorConfig::new(sigma, c_factor).map_err(err)?;
    let m = oracle_moments(&model.0, &x, &cfg, parse_kind(kind)?).map_err(err)?;
    Ok((m.mean, m.variance))
}

/// Runs a harness command with `key = value` settings and returns its CSV
/// tables keyed by suffix (`""` for the primary table).
#[pyfunction]
#[pyo3(signature = (command, settings = None))]
fn run_experiment(
    py: Python<'_>,
    command: &str,
    settings: Option<&Bound<'_, PyAny>>,
) -> PyResult<BTreeMap<String, String>> {
    let command: Command = command.parse().map_err(err)?;
    let spec = ExperimentSpec::from_kv(command, &kv_from(settings)?).map_err(err)?;
    let tables = py.detach(|| harness::run(&spec)).map_err(err)?;
    tables
        .into_iter()
        .map(|(suffix, t)| Ok((suffix.to_string(), t.to_csv_string().map_err(err)?)))
        .collect()
}

#[pymodule]
fn peekgrad(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(pmf, m)?)?;
    m.add_function(wrap_pyfunction!(mass, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(heaviside_vrr, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(expectation_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<PyPeekScalar>()?;
    m.add_class::<PyPeekContext>()?;
    m.add_class::<PyModel>()?;
    Ok(())
}
