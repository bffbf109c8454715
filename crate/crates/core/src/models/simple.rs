use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::peek::{PeekNum, Rel, Tracer};
use crate::stream::SimRng;

use super::{check_dim, ObjectiveModel};

const WIDE_BOUND: i64 = 1_000_000;

/// `Σ_i H(x_i - a_i)` with `H(z) = 1` for `z >= 0`, else 0.
#[derive(Debug, Clone)]
pub struct Heaviside {
    offsets: Vec<f64>,
}

impl Heaviside {
    pub fn new(offsets: Vec<f64>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::Config("heaviside needs at least one offset".into()));
        }
        Ok(Self { offsets })
    }

    pub fn from_kv(params: &KvMap) -> Result<Self> {
        let offsets = match params.get_f64_list("offsets")? {
            Some(v) => v,
            None => vec![0.0; params.get_usize("d")?.unwrap_or(1)],
        };
        Self::new(offsets)
    }
}

impl ObjectiveModel for Heaviside {
    fn name(&self) -> &str {
        "heaviside"
    }
    fn dim(&self) -> usize {
        self.offsets.len()
    }
    fn bounds(&self) -> (Vec<i64>, Vec<i64>) {
        (vec![-WIDE_BOUND; self.dim()], vec![WIDE_BOUND; self.dim()])
    }
    fn is_stochastic(&self) -> bool {
        false
    }
    fn default_point(&self) -> Vec<i64> {
        vec![0; self.dim()]
    }
    fn evaluate<V: PeekNum>(
        &self,
        x: &[V],
        tracer: &mut V::Tracer,
        _rng: &mut SimRng,
    ) -> Result<V> {
        check_dim(self.dim(), x.len())?;
        let mut steps = 0.0;
        for (xi, &a) in x.iter().zip(&self.offsets) {
            if tracer.compare_scalar(xi, Rel::Ge, a) {
                steps += 1.0;
            }
        }
        Ok(V::constant(steps))
    }
}

/// `w · x`, branchless.
#[derive(Debug, Clone)]
pub struct Linear {
    weights: Vec<f64>,
}

impl Linear {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config(
                "linear model needs at least one weight".into(),
            ));
        }
        Ok(Self { weights })
    }

    pub fn from_kv(params: &KvMap) -> Result<Self> {
        Self::new(params.get_f64_list("weights")?.unwrap_or_else(|| vec![3.0]))
    }
}

impl ObjectiveModel for Linear {
    fn name(&self) -> &str {
        "linear"
    }
    fn dim(&self) -> usize {
        self.weights.len()
    }
    fn bounds(&self) -> (Vec<i64>, Vec<i64>) {
        (vec![-WIDE_BOUND; self.dim()], vec![WIDE_BOUND; self.dim()])
    }
    fn is_stochastic(&self) -> bool {
        false
    }
    fn default_point(&self) -> Vec<i64> {
        vec![0; self.dim()]
    }
    fn evaluate<V: PeekNum>(
        &self,
        x: &[V],
        _tracer: &mut V::Tracer,
        _rng: &mut SimRng,
    ) -> Result<V> {
        check_dim(self.dim(), x.len())?;
        let mut acc = V::constant(0.0);
        for (xi, &w) in x.iter().zip(&self.weights) {
            acc += xi.clone() * w;
        }
        Ok(acc)
    }
}

/// Deterministic 2-d polynomial with branches that couple both inputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct Branchy;

impl ObjectiveModel for Branchy {
    fn name(&self) -> &str {
        "branchy"
    }
    fn dim(&self) -> usize {
        2
    }
    fn bounds(&self) -> (Vec<i64>, Vec<i64>) {
        (vec![-WIDE_BOUND; 2], vec![WIDE_BOUND; 2])
    }
    fn is_stochastic(&self) -> bool {
        false
    }
    fn default_point(&self) -> Vec<i64> {
        vec![1, 0]
    }
    fn evaluate<V: PeekNum>(
        &self,
        x: &[V],
        tracer: &mut V::Tracer,
        _rng: &mut SimRng,
    ) -> Result<V> {
        check_dim(2, x.len())?;
        let (a, b) = (&x[0], &x[1]);
        let s = a.clone() * b + a;
        let mut y = if tracer.compare_scalar(&s, Rel::Gt, 2.0) {
            a.clone() * a - b.clone() * 3.0
        } else {
            a.clone() * 2.0 + b.clone() * b
        };
        if tracer.compare_scalar(b, Rel::Lt, 1.0) {
            y += 5.0;
        }
        if tracer.compare(a, Rel::Ge, b) {
            y *= 0.5;
        }
        let k = tracer.to_index(&(b.clone() * 0.5))?;
        if k.rem_euclid(2) == 1 {
            y -= 1.0;
        }
        Ok(y)
    }
}
