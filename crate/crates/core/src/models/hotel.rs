use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::peek::{PeekNum, Rel, ScalarTracer, Tracer};
use crate::stream::SimRng;

use super::{check_dim, ObjectiveModel};

/// A bookable stay: `nights` consecutive nights from `start`, at one fare.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HotelProduct {
    pub start: usize,
    pub nights: usize,
    pub fare: f64,
}

/// Revenue management over a week of nights with overlapping stay products.
///
/// Requests for product `j` arrive as a Poisson process with intensity
/// `arrival_rate[j]` over `[0, horizon)`. A request is accepted when every
/// covered night still has a free room and fewer than `x_j` requests of that
/// product were accepted so far. With `warmup`, arrivals are generated over
/// two horizons and only the second horizon's bookings count as revenue.
#[derive(Debug, Clone, PartialEq)]
pub struct HotelParams {
    pub n_nights: usize,
    pub capacity: Vec<f64>,
    pub products: Vec<HotelProduct>,
    pub arrival_rate: Vec<f64>,
    pub horizon: f64,
    pub warmup: bool,
}

impl HotelParams {
    /// The 56-product week: every stay `[s, s + len)` inside 7 nights, each
    /// at a rack fare (200/night) and a discount fare (100/night). Discount
    /// demand is twice rack demand; longer stays are requested less often.
    pub fn week() -> Self {
        let n_nights = 7;
        let mut products = Vec::new();
        let mut arrival_rate = Vec::new();
        for start in 0..n_nights {
            for nights in 1..=(n_nights - start) {
                for (per_night, demand) in [(200.0, 8.0), (100.0, 16.0)] {
                    products.push(HotelProduct {
                        start,
                        nights,
                        fare: per_night * nights as f64,
                    });
                    arrival_rate.push(demand / nights as f64);
                }
            }
        }
        Self {
            n_nights,
            capacity: vec![100.0; n_nights],
            products,
            arrival_rate,
            horizon: 1.0,
            warmup: false,
        }
    }

    /// The first `n_products` products of [`HotelParams::week`] with room
    /// capacity scaled to keep demand binding.
    pub fn desk(n_products: usize) -> Self {
        let mut p = Self::week();
        let n = n_products.min(p.products.len());
        p.products.truncate(n);
        p.arrival_rate.truncate(n);
        p.capacity = vec![20.0; p.n_nights];
        p
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let mut p = match kv.get_usize("n_products")? {
            Some(n) => Self::desk(n),
            None => Self::week(),
        };
        match kv.get_f64_list("capacity")? {
            Some(c) if c.len() == 1 => p.capacity = vec![c[0]; p.n_nights],
            Some(c) => p.capacity = c,
            None => {}
        }
        if let Some(r) = kv.get_f64_list("arrival_rate")? {
            p.arrival_rate = if r.len() == 1 {
                vec![r[0]; p.products.len()]
            } else {
                r
            };
        }
        if let Some(h) = kv.get_f64("horizon")? {
            p.horizon = h;
        }
        if let Some(w) = kv.get_bool("warmup")? {
            p.warmup = w;
        }
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.products.is_empty() {
            return Err(Error::Config("hotel: no products".into()));
        }
        if self.capacity.len() != self.n_nights {
            return Err(Error::Config(format!(
                "hotel: capacity has {} entries, expected {}",
                self.capacity.len(),
                self.n_nights
            )));
        }
        if self.arrival_rate.len() != self.products.len() {
            return Err(Error::Config(
                "hotel: one arrival rate per product required".into(),
            ));
        }
        if self.arrival_rate.iter().any(|&r| r < 0.0 || !r.is_finite()) {
            return Err(Error::Config(
                "hotel: arrival rates must be finite and >= 0".into(),
            ));
        }
        for p in &self.products {
            if p.nights == 0 || p.start + p.nights > self.n_nights {
                return Err(Error::Config(format!(
                    "hotel: stay [{}, {}) outside the {} nights",
                    p.start,
                    p.start + p.nights,
                    self.n_nights
                )));
            }
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Config("hotel: horizon must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-run booking record of a scalar evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct HotelStats {
    pub accepted: Vec<u64>,
    pub occupancy: Vec<f64>,
    pub revenue: f64,
}

#[derive(Debug, Clone)]
pub struct Hotel {
    params: HotelParams,
}

impl Hotel {
    pub fn new(params: HotelParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &HotelParams {
        &self.params
    }

    pub fn simulate(&self, x: &[i64], seed: u64) -> Result<HotelStats> {
        check_dim(self.dim(), x.len())?;
        let input: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let (revenue, accepted, occupancy) =
            self.run(&input, &mut ScalarTracer::new(), &mut SimRng::new(seed))?;
        Ok(HotelStats {
            accepted,
            occupancy,
            revenue: revenue.primal(),
        })
    }

    /// Arrival stream sorted by time; depends only on the parameters.
    fn arrivals(&self, rng: &mut SimRng) -> Vec<(f64, usize)> {
        let p = &self.params;
        let end = if p.warmup { 2.0 * p.horizon } else { p.horizon };
        let mut out = Vec::new();
        for (j, &rate) in p.arrival_rate.iter().enumerate() {
            if rate <= 0.0 {
                continue;
            }
            let mut t = 0.0;
            loop {
                t += rng.exponential(rate / p.horizon);
                if t >= end {
                    break;
                }
                out.push((t, j));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    fn run<V: PeekNum>(
        &self,
        x: &[V],
        tracer: &mut V::Tracer,
        rng: &mut SimRng,
    ) -> Result<(V, Vec<u64>, Vec<f64>)> {
        let p = &self.params;
        check_dim(self.dim(), x.len())?;
        let mut used = vec![0.0; p.n_nights];
        let mut accepted = vec![0u64; p.products.len()];
        let mut revenue = 0.0;
        for (t, j) in self.arrivals(rng) {
            let prod = &p.products[j];
            let nights = prod.start..prod.start + prod.nights;
            // room availability only depends on earlier decisions, which are
            // shared by every alternative still equivalent at this point
            if !nights.clone().all(|n| used[n] < p.capacity[n]) {
                continue;
            }
            if tracer.compare_scalar(&x[j], Rel::Gt, accepted[j] as f64) {
                accepted[j] += 1;
                for n in nights {
                    used[n] += 1.0;
                }
                if !p.warmup || t >= p.horizon {
                    revenue += prod.fare;
                }
            }
        }
        Ok((V::constant(revenue), accepted, used))
    }
}

impl ObjectiveModel for Hotel {
    fn name(&self) -> &str {
        "hotel"
    }

    fn dim(&self) -> usize {
        self.params.products.len()
    }

    fn bounds(&self) -> (Vec<i64>, Vec<i64>) {
        let cap = self.params.capacity.iter().cloned().fold(0.0, f64::max) as i64;
        (vec![0; self.dim()], vec![cap; self.dim()])
    }

    fn is_stochastic(&self) -> bool {
        true
    }

    /// Limits at half the expected demand of each product.
    fn default_point(&self) -> Vec<i64> {
        self.params
            .arrival_rate
            .iter()
            .map(|r| (0.5 * r).round() as i64)
            .collect()
    }

    fn evaluate<V: PeekNum>(&self, x: &[V], tracer: &mut V::Tracer, rng: &mut SimRng) -> Result<V> {
        Ok(self.run(x, tracer, rng)?.0)
    }
}
