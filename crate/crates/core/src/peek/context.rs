use crate::error::{Error, Result};

use super::{Decision, PeekScalar, Rel, Tracer};

/// Per-run bookkeeping of a peeked evaluation.
///
/// Dimension `i` covers the absolute input values `x_i - c ..= x_i + c`
/// (grid slot `k` holds `x_i - c + k`, i.e. offset `k - c` from `x_i`). A
/// dimension whose primal perturbation lies outside the radius is a fallback
/// dimension: its input is lifted as a plain scalar and it is estimated with
/// the ordinary forward-difference formula.
#[derive(Debug, Clone)]
pub struct PeekContext {
    radius: usize,
    x: Vec<i64>,
    draw: Vec<i64>,
    peeked: Vec<bool>,
    masks: Vec<Vec<bool>>,
    log: Option<Vec<Decision>>,
}

impl PeekContext {
    pub fn new(x: &[i64], draw: &[i64], radius: usize) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if x.len() != draw.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: draw.len(),
            });
        }
        let width = 2 * radius + 1;
        let peeked: Vec<bool> = draw
            .iter()
            .map(|r| r.unsigned_abs() as usize <= radius)
            .collect();
        Ok(Self {
            radius,
            x: x.to_vec(),
            draw: draw.to_vec(),
            peeked,
            masks: vec![vec![true; width]; x.len()],
            log: None,
        })
    }

    /// Records the primal decision sequence from now on.
    pub fn enable_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn decisions(&self) -> Option<&[Decision]> {
        self.log.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn width(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn x(&self) -> &[i64] {
        &self.x
    }

    pub fn draw(&self) -> &[i64] {
        &self.draw
    }

    pub fn is_peeked(&self, i: usize) -> bool {
        self.peeked.get(i).copied().unwrap_or(false)
    }

    pub fn peeked_flags(&self) -> &[bool] {
        &self.peeked
    }

    /// Absolute candidate values of dimension `i`.
    pub fn grid(&self, i: usize) -> Vec<i64> {
        let c = self.radius as i64;
        (self.x[i] - c..=self.x[i] + c).collect()
    }

    /// Slot of `x_i + R_i` within the grid, `None` for fallback dimensions.
    pub fn primal_index(&self, i: usize) -> Option<usize> {
        if self.is_peeked(i) {
            Some((self.draw[i] + self.radius as i64) as usize)
        } else {
            None
        }
    }

    pub fn mask(&self, i: usize) -> &[bool] {
        &self.masks[i]
    }

    fn check_dim(&self, i: usize) -> Result<()> {
        if i >= self.x.len() {
            return Err(Error::DimensionOutOfRange {
                dim: i,
                d: self.x.len(),
            });
        }
        Ok(())
    }

    /// The perturbed input `x_i + R_i`, carrying the grid as its row when the
    /// dimension is peeked.
    pub fn lift_input(&self, i: usize) -> Result<PeekScalar> {
        self.check_dim(i)?;
        let primal = (self.x[i] + self.draw[i]) as f64;
        if !self.peeked[i] {
            return Ok(PeekScalar::constant(primal));
        }
        let row: Box<[f64]> = self.grid(i).into_iter().map(|v| v as f64).collect();
        Ok(PeekScalar::with_row(primal, i, row))
    }

    pub fn lift_all(&self) -> Vec<PeekScalar> {
        (0..self.dim())
            .map(|i| self.lift_input(i).expect("dimension in range"))
            .collect()
    }

    /// Row of `out` along dimension `i` together with the current mask.
    ///
    /// Without a dependency on `i` the output did not diverge along `i`, so
    /// the primal value is broadcast.
    pub fn extract(&self, out: &PeekScalar, i: usize) -> Result<(Vec<f64>, Vec<bool>)> {
        self.check_dim(i)?;
        if !self.peeked[i] {
            return Err(Error::FallbackDimension(i));
        }
        let row = match out.row(i) {
            Some(r) => r.to_vec(),
            None => vec![out.primal; self.width()],
        };
        Ok((row, self.masks[i].clone()))
    }

    fn record(&mut self, d: Decision) {
        if let Some(log) = &mut self.log {
            log.push(d);
        }
    }

    /// Clears mask bits of `a`'s rows whose outcome under `rel` against `rhs`
    /// differs from `truth`. NaN entries always lose their bit.
    fn update_masks(&mut self, a: &PeekScalar, rel: Rel, rhs: f64, truth: bool) {
        for dep in a.deps.iter() {
            let Some(mask) = self.masks.get_mut(dep.dim as usize) else {
                continue;
            };
            for (bit, &v) in mask.iter_mut().zip(dep.row.iter()) {
                *bit &= !v.is_nan() && rel.eval(v, rhs) == truth;
            }
        }
    }
}

impl Tracer<PeekScalar> for PeekContext {
    fn compare(&mut self, a: &PeekScalar, rel: Rel, b: &PeekScalar) -> bool {
        if b.is_scalar() {
            return self.compare_scalar(a, rel, b.primal);
        }
        let truth = rel.eval(a.primal, b.primal);
        let diff = a - b;
        self.update_masks(&diff, rel, 0.0, truth);
        self.record(Decision::Branch(truth));
        truth
    }

    fn compare_scalar(&mut self, a: &PeekScalar, rel: Rel, b: f64) -> bool {
        let truth = rel.eval(a.primal, b);
        self.update_masks(a, rel, b, truth);
        self.record(Decision::Branch(truth));
        truth
    }

    fn to_index(&mut self, a: &PeekScalar) -> Result<i64> {
        if !a.primal.is_finite() {
            return Err(Error::NonFiniteIndex(a.primal));
        }
        let idx = a.primal.round();
        for dep in a.deps.iter() {
            let Some(mask) = self.masks.get_mut(dep.dim as usize) else {
                continue;
            };
            for (bit, &v) in mask.iter_mut().zip(dep.row.iter()) {
                *bit &= v.round() == idx;
            }
        }
        let idx = idx as i64;
        self.record(Decision::Index(idx));
        Ok(idx)
    }
}
