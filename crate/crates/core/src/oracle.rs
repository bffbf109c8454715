//! Closed-form variance split of PGO vs PGO-DP for the Heaviside step at
//! `x = 0`.
//!
//! At `x = 0` the step changes value only for negative perturbations, where
//! the PGO value (before the `σ⁻²` factor) is `|k|`; non-negative
//! perturbations give 0. Conditioning on the sign class splits PGO's
//! variance into the expected in-class variance `p·σ²₋` and the variance of
//! the class means `p·q·μ₋²`. With full coverage PGO-DP keeps only the
//! latter.

use crate::dgauss::DiscreteGaussianSpec;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeavisideOracleResult {
    pub sigma: f64,
    /// Probability of a negative perturbation.
    pub p: f64,
    pub q: f64,
    /// Mean of `|k|` within the negative class.
    pub mu_neg: f64,
    /// Variance of `|k|` within the negative class.
    pub var_neg: f64,
    pub exp_in_class_var: f64,
    pub var_across_means: f64,
    pub var_pgo: f64,
    pub vrr: f64,
}

impl HeavisideOracleResult {
    /// `(in-class, across-means)` divided by `σ²`, the normalization of the
    /// published comparison table.
    pub fn table_columns(&self) -> (f64, f64) {
        let s2 = self.sigma * self.sigma;
        (self.exp_in_class_var / s2, self.var_across_means / s2)
    }
}

/// Oracle with sums truncated at `ceil(15σ)`.
pub fn heaviside_vrr(sigma: f64) -> Result<HeavisideOracleResult> {
    let spec = DiscreteGaussianSpec::new(sigma)?;
    Ok(heaviside_vrr_with(&spec))
}

pub fn heaviside_vrr_with(spec: &DiscreteGaussianSpec) -> HeavisideOracleResult {
    let t = spec.trunc_radius();
    let (mut p, mut first, mut second) = (0.0, 0.0, 0.0);
    for k in 1..=t {
        let w = spec.pmf(-k);
        let kf = k as f64;
        p += w;
        first += w * kf;
        second += w * kf * kf;
    }
    let q = 1.0 - p;
    let mu_neg = first / p;
    let var_neg = second / p - mu_neg * mu_neg;
    let exp_in_class_var = p * var_neg;
    let var_across_means = p * q * mu_neg * mu_neg;
    HeavisideOracleResult {
        sigma: spec.sigma(),
        p,
        q,
        mu_neg,
        var_neg,
        exp_in_class_var,
        var_across_means,
        var_pgo: exp_in_class_var + var_across_means,
        vrr: 1.0 + exp_in_class_var / var_across_means,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{expectation_oracle, EstimatorConfig, EstimatorKind};
    use crate::models::Heaviside;

    #[test]
    fn sigma_one_row() {
        let r = heaviside_vrr(1.0).unwrap();
        assert!((r.exp_in_class_var - 0.069).abs() < 5e-4);
        assert!((r.var_across_means - 0.327).abs() < 5e-4);
        assert!((r.vrr - 1.212).abs() < 5e-4);
        assert!((r.p - 0.308_538).abs() < 1e-6);
        assert_eq!(r.p + r.q, 1.0);
        assert_eq!(r.var_pgo, r.exp_in_class_var + r.var_across_means);
    }

    #[test]
    fn larger_sigmas() {
        let r = heaviside_vrr(8.0).unwrap();
        assert!((r.vrr - 1.946).abs() < 5e-4);
        let (a, b) = heaviside_vrr(2.0).unwrap().table_columns();
        assert!((a - 0.122).abs() < 5e-4 && (b - 0.232).abs() < 5e-4);
        let mut last = 1.0;
        for s in [1.0, 2.0, 4.0, 8.0] {
            let v = heaviside_vrr(s).unwrap().vrr;
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn agrees_with_enumerated_estimator_variances() {
        let h = Heaviside::new(vec![0.0]).unwrap();
        for sigma in [1.0, 2.0, 4.0] {
            let cfg = EstimatorConfig::new(sigma, 15.0).unwrap();
            let r = heaviside_vrr(sigma).unwrap();
            let s4 = sigma.powi(4);
            let pgo = expectation_oracle(&h, &[0], &cfg, EstimatorKind::Pgo).unwrap();
            let dp = expectation_oracle(&h, &[0], &cfg, EstimatorKind::PgoDp).unwrap();
            assert!((pgo.variance[0] * s4 - r.var_pgo).abs() < 1e-6);
            assert!((dp.variance[0] * s4 - r.var_across_means).abs() < 1e-6);
        }
    }
}
