use smallvec::{smallvec, SmallVec};

use super::{PeekContext, PeekNum};

/// Alternative values of a quantity along one input dimension, one entry per
/// grid offset of that dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dep {
    pub(crate) dim: u32,
    pub(crate) row: Box<[f64]>,
}

impl Dep {
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn row(&self) -> &[f64] {
        &self.row
    }
}

/// A primal value plus sparse per-dimension rows of alternative values.
///
/// Dimension ids in `deps` are unique. For a dependency on dimension `i`,
/// the row entry at the primal index of `i` equals `primal` bitwise.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeekScalar {
    pub(crate) primal: f64,
    pub(crate) deps: SmallVec<[Dep; 2]>,
}

impl PeekScalar {
    /// A scalar without dependencies.
    pub fn constant(v: f64) -> Self {
        Self {
            primal: v,
            deps: SmallVec::new(),
        }
    }

    pub(crate) fn with_row(primal: f64, dim: usize, row: Box<[f64]>) -> Self {
        Self {
            primal,
            deps: smallvec![Dep {
                dim: dim as u32,
                row,
            }],
        }
    }

    pub fn primal(&self) -> f64 {
        self.primal
    }

    pub fn deps(&self) -> &[Dep] {
        &self.deps
    }

    pub fn is_scalar(&self) -> bool {
        self.deps.is_empty()
    }

    pub fn row(&self, dim: usize) -> Option<&[f64]> {
        self.deps
            .iter()
            .find(|d| d.dim as usize == dim)
            .map(|d| &*d.row)
    }

    /// Whether every row holds the primal value at the dimension's primal
    /// index.
    pub fn primal_slots_consistent(&self, ctx: &PeekContext) -> bool {
        self.deps.iter().all(|d| match ctx.primal_index(d.dim()) {
            Some(k) => d.row[k].to_bits() == self.primal.to_bits(),
            None => false,
        })
    }

    pub(crate) fn map(mut self, f: impl Fn(f64) -> f64) -> Self {
        self.primal = f(self.primal);
        for dep in self.deps.iter_mut() {
            for v in dep.row.iter_mut() {
                *v = f(*v);
            }
        }
        self
    }

    /// Element-wise binary operation over the union of both dependency sets.
    pub(crate) fn combine(a: Self, b: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        if b.deps.is_empty() {
            let bp = b.primal;
            return a.map(|x| f(x, bp));
        }
        if a.deps.is_empty() {
            let ap = a.primal;
            return b.map(|y| f(ap, y));
        }
        if b.deps.len() > a.deps.len() {
            merge_into(b, &a, |y, x| f(x, y))
        } else {
            merge_into(a, &b, f)
        }
    }

    pub(crate) fn combine_ref(a: &Self, b: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        if b.deps.is_empty() {
            let bp = b.primal;
            return a.clone().map(|x| f(x, bp));
        }
        if a.deps.is_empty() {
            let ap = a.primal;
            return b.clone().map(|y| f(ap, y));
        }
        if b.deps.len() > a.deps.len() {
            merge_into(b.clone(), a, |y, x| f(x, y))
        } else {
            merge_into(a.clone(), b, f)
        }
    }
}

/// Folds `other` into `base` in place. `f` receives (base value, other value).
fn merge_into(mut base: PeekScalar, other: &PeekScalar, f: impl Fn(f64, f64) -> f64) -> PeekScalar {
    let base_primal = base.primal;
    let other_primal = other.primal;
    let mut matched: SmallVec<[bool; 16]> = smallvec![false; other.deps.len()];
    for (pos, dep) in base.deps.iter_mut().enumerate() {
        // same slot first, then linear search
        let hit = match other.deps.get(pos) {
            Some(o) if o.dim == dep.dim => Some(pos),
            _ => other.deps.iter().position(|o| o.dim == dep.dim),
        };
        match hit {
            Some(j) => {
                matched[j] = true;
                for (x, y) in dep.row.iter_mut().zip(other.deps[j].row.iter()) {
                    *x = f(*x, *y);
                }
            }
            None => {
                for x in dep.row.iter_mut() {
                    *x = f(*x, other_primal);
                }
            }
        }
    }
    for (j, od) in other.deps.iter().enumerate() {
        if !matched[j] {
            base.deps.push(Dep {
                dim: od.dim,
                row: od.row.iter().map(|y| f(base_primal, *y)).collect(),
            });
        }
    }
    base.primal = f(base_primal, other_primal);
    base
}

impl From<f64> for PeekScalar {
    fn from(v: f64) -> Self {
        Self::constant(v)
    }
}

impl PeekNum for PeekScalar {
    type Tracer = PeekContext;

    fn constant(v: f64) -> Self {
        PeekScalar::constant(v)
    }
    fn primal(&self) -> f64 {
        self.primal
    }
    fn abs(&self) -> Self {
        self.clone().map(f64::abs)
    }
    fn exp(&self) -> Self {
        self.clone().map(f64::exp)
    }
    fn ln(&self) -> Self {
        self.clone().map(f64::ln)
    }
    fn sqrt(&self) -> Self {
        self.clone().map(f64::sqrt)
    }
    fn floor(&self) -> Self {
        self.clone().map(f64::floor)
    }
    fn round(&self) -> Self {
        self.clone().map(f64::round)
    }
    fn powf(&self, exponent: &Self) -> Self {
        PeekScalar::combine_ref(self, exponent, f64::powf)
    }
    fn min(&self, other: &Self) -> Self {
        PeekScalar::combine_ref(self, other, f64::min)
    }
    fn max(&self, other: &Self) -> Self {
        PeekScalar::combine_ref(self, other, f64::max)
    }
}
