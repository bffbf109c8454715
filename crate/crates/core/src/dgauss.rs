//! Rounded Gaussian perturbations on the integer lattice.
//!
//! `P(R = r)` is the mass of `N(0, σ²)` on `[r - 0.5, r + 0.5]`, which is the
//! same law as rounding a continuous normal draw to the nearest integer.

use libm::{erf, erfc};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Number of standard deviations covered by exact sums.
pub const FULL_COVERAGE_SIGMAS: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteGaussianSpec {
    sigma: f64,
    trunc_radius: i64,
}

impl DiscreteGaussianSpec {
    /// Spec with the default truncation radius `ceil(15σ)`.
    pub fn new(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "sigma must be finite and positive, got {sigma}"
            )));
        }
        let trunc_radius = ((FULL_COVERAGE_SIGMAS * sigma).ceil() as i64).max(1);
        Ok(Self {
            sigma,
            trunc_radius,
        })
    }

    pub fn with_trunc_radius(sigma: f64, trunc_radius: i64) -> Result<Self> {
        let mut spec = Self::new(sigma)?;
        if trunc_radius < 1 {
            return Err(Error::InvalidSpec(format!(
                "truncation radius must be >= 1, got {trunc_radius}"
            )));
        }
        spec.trunc_radius = trunc_radius;
        Ok(spec)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn trunc_radius(&self) -> i64 {
        self.trunc_radius
    }

    /// `P(R = r)`.
    ///
    /// Evaluated on the non-positive half through `erfc` so that tail masses
    /// keep full relative precision instead of cancelling near 1.
    pub fn pmf(&self, r: i64) -> f64 {
        let scale = self.sigma * std::f64::consts::SQRT_2;
        let k = r.unsigned_abs() as f64;
        if k == 0.0 {
            return erf(0.5 / scale);
        }
        // P(-k - 0.5 < X < -k + 0.5) = (erfc((k - 0.5)/s) - erfc((k + 0.5)/s)) / 2
        0.5 * (erfc((k - 0.5) / scale) - erfc((k + 0.5) / scale))
    }

    /// Probabilities for offsets `-radius..=radius`, ascending.
    pub fn pmf_table(&self, radius: i64) -> Vec<f64> {
        (-radius..=radius).map(|r| self.pmf(r)).collect()
    }

    /// Total probability of a set of distinct offsets, summed in ascending
    /// offset order.
    pub fn mass<I: IntoIterator<Item = i64>>(&self, offsets: I) -> f64 {
        let mut sorted: Vec<i64> = offsets.into_iter().collect();
        sorted.sort_unstable();
        sorted.into_iter().map(|r| self.pmf(r)).sum()
    }

    /// Draws a continuous `N(0, σ²)` variate and rounds it half away from zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let z: f64 = StandardNormal.sample(rng);
        (z * self.sigma).round() as i64
    }

    pub fn sample_vec<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Vec<i64> {
        (0..d).map(|_| self.sample(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Composite Simpson integration of the normal density over
    /// `[r - 0.5, r + 0.5]`; independent of the erf route.
    fn quad_pmf(r: i64, sigma: f64) -> f64 {
        let n = 2000;
        let (a, b) = (r as f64 - 0.5, r as f64 + 0.5);
        let h = (b - a) / n as f64;
        let dens = |t: f64| {
            (-(t * t) / (2.0 * sigma * sigma)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma)
        };
        let mut acc = dens(a) + dens(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * dens(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn quadrature_oracle_matches_frozen_values() {
        assert!((quad_pmf(0, 1.0) - 0.382_924_9).abs() < 1e-7);
        assert!((quad_pmf(1, 1.0) - 0.241_730_3).abs() < 1e-7);
    }

    #[test]
    fn pmf_matches_quadrature() {
        for sigma in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let spec = DiscreteGaussianSpec::new(sigma).unwrap();
            for r in -6..=6 {
                assert!(
                    (spec.pmf(r) - quad_pmf(r, sigma)).abs() < 1e-12,
                    "sigma {sigma} r {r}: {} vs {}",
                    spec.pmf(r),
                    quad_pmf(r, sigma)
                );
            }
        }
    }

    #[test]
    fn pmf_goldens() {
        let spec = DiscreteGaussianSpec::new(1.0).unwrap();
        assert!((spec.pmf(0) - 0.382_924_9).abs() < 5e-8);
        assert!((spec.pmf(1) - 0.241_730_3).abs() < 5e-8);
        for r in 0..40 {
            assert_eq!(spec.pmf(r), spec.pmf(-r));
        }
    }

    #[test]
    fn invalid_sigma_rejected() {
        for s in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                DiscreteGaussianSpec::new(s),
                Err(Error::InvalidSpec(_))
            ));
        }
        assert!(DiscreteGaussianSpec::with_trunc_radius(1.0, 0).is_err());
    }

    #[test]
    fn mass_goldens() {
        let spec = DiscreteGaussianSpec::new(1.0).unwrap();
        let neg = spec.mass(-40..0);
        let oracle: f64 = (-40..0).map(|r| quad_pmf(r, 1.0)).sum();
        assert!((neg - oracle).abs() < 1e-10);
        assert!((neg - 0.308_538).abs() < 5e-7);
        assert_eq!(spec.mass(std::iter::empty()), 0.0);
        assert!((spec.mass(-15..=15) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn truncated_mass_is_near_one() {
        for sigma in [0.3, 1.0, 2.0, 4.0, 8.0] {
            let spec = DiscreteGaussianSpec::new(sigma).unwrap();
            let t = spec.trunc_radius();
            let m = spec.mass(-t..=t);
            assert!(m <= 1.0 + 1e-12 && m >= 1.0 - 1e-7, "sigma {sigma}: {m}");
        }
    }

    #[test]
    fn strictly_decreasing_in_magnitude() {
        for sigma in [1.0, 2.0, 4.0, 8.0] {
            let spec = DiscreteGaussianSpec::new(sigma).unwrap();
            for r in 0..(4.0 * sigma) as i64 {
                assert!(spec.pmf(r) > spec.pmf(r + 1));
            }
        }
    }

    #[test]
    fn sampling_replays_under_fixed_seed() {
        let spec = DiscreteGaussianSpec::new(2.0).unwrap();
        let a = spec.sample_vec(64, &mut ChaCha8Rng::seed_from_u64(9));
        let b = spec.sample_vec(64, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_matches_pmf() {
        let spec = DiscreteGaussianSpec::new(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let mut counts = std::collections::BTreeMap::<i64, u64>::new();
        let (mut s1, mut s2) = (0.0f64, 0.0f64);
        for _ in 0..n {
            let r = spec.sample(&mut rng);
            *counts.entry(r).or_default() += 1;
            s1 += r as f64;
            s2 += (r * r) as f64;
        }
        let freq0 = counts[&0] as f64 / n as f64;
        assert!((freq0 - 0.3829).abs() < 0.002, "{freq0}");
        let mean = s1 / n as f64;
        let var = (s2 - n as f64 * mean * mean) / (n as f64 - 1.0);
        // sum r^2 pmf(r) by quadrature
        let oracle_var: f64 = (-15..=15).map(|r| (r * r) as f64 * quad_pmf(r, 1.0)).sum();
        assert!((oracle_var - 1.0833).abs() < 1e-3);
        assert!((var - oracle_var).abs() < 0.01, "{var}");
        // 4-sigma binomial band per bin
        for (r, c) in counts {
            let p = spec.pmf(r);
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((c as f64 - n as f64 * p).abs() <= 4.0 * sd + 1.0, "bin {r}");
        }
    }
}
