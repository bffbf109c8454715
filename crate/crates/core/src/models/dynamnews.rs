use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::peek::{PeekNum, Rel, ScalarTracer, Tracer};
use crate::stream::SimRng;

use super::{check_dim, ObjectiveModel};

/// Newsvendor with dynamic substitution demand.
///
/// Each customer scores every product with `utility_j + Gumbel(0, scale)` and
/// buys the best-scoring product still in stock, unless the no-purchase
/// option scores higher. Products are visited best-first, so only the stock
/// levels actually inspected enter the control flow.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamNewsParams {
    pub n_products: usize,
    pub n_customers: usize,
    pub unit_cost: Vec<f64>,
    pub price: Vec<f64>,
    pub utility: Vec<f64>,
    pub gumbel_scale: f64,
    /// Deterministic utility of leaving without a purchase; `None` disables
    /// the option.
    pub no_purchase_utility: Option<f64>,
    /// Appends one price variable per product to the decision vector.
    pub price_variables: bool,
    /// Charge unit cost on sold units instead of on the initial stock.
    pub charge_sold_only: bool,
    /// Starting stock per product for `default_point`.
    pub init_level: i64,
    pub max_stock: i64,
    pub max_price: i64,
}

impl DynamNewsParams {
    /// Uniform instance: price 9, cost 5, utilities `6 + j`, Gumbel scale 1.
    pub fn uniform(n_products: usize, n_customers: usize) -> Self {
        Self {
            n_products,
            n_customers,
            unit_cost: vec![5.0; n_products],
            price: vec![9.0; n_products],
            utility: (0..n_products).map(|j| 6.0 + j as f64).collect(),
            gumbel_scale: 1.0,
            no_purchase_utility: Some(0.0),
            price_variables: false,
            charge_sold_only: false,
            init_level: 5,
            max_stock: n_customers as i64,
            max_price: 100,
        }
    }

    /// 20 products, 100 customers.
    pub fn desk() -> Self {
        Self::uniform(20, 100)
    }

    /// 1000 products, 3000 customers.
    pub fn large() -> Self {
        let mut p = Self::uniform(1000, 3000);
        p.init_level = 3;
        p
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let n_products = kv.get_usize("n_products")?.unwrap_or(20);
        let n_customers = kv.get_usize("n_customers")?.unwrap_or(100);
        let mut p = Self::uniform(n_products, n_customers);
        let per_product = |key: &str, default: Vec<f64>| -> Result<Vec<f64>> {
            match kv.get_f64_list(key)? {
                None => Ok(default),
                Some(v) if v.len() == 1 => Ok(vec![v[0]; n_products]),
                Some(v) => Ok(v),
            }
        };
        p.unit_cost = per_product("unit_cost", p.unit_cost)?;
        p.price = per_product("price", p.price)?;
        p.utility = per_product("utility", p.utility)?;
        if let Some(s) = kv.get_f64("gumbel_scale")? {
            p.gumbel_scale = s;
        }
        match kv.get("no_purchase_utility") {
            Some("none") => p.no_purchase_utility = None,
            Some(_) => p.no_purchase_utility = kv.get_f64("no_purchase_utility")?,
            None => {}
        }
        if let Some(b) = kv.get_bool("price_variables")? {
            p.price_variables = b;
        }
        if let Some(b) = kv.get_bool("charge_sold_only")? {
            p.charge_sold_only = b;
        }
        if let Some(v) = kv.get_parsed("init_level")? {
            p.init_level = v;
        }
        if let Some(v) = kv.get_parsed("max_stock")? {
            p.max_stock = v;
        }
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_products;
        if n == 0 {
            return Err(Error::Config("dynamnews: n_products must be >= 1".into()));
        }
        for (name, v) in [
            ("unit_cost", &self.unit_cost),
            ("price", &self.price),
            ("utility", &self.utility),
        ] {
            if v.len() != n {
                return Err(Error::Config(format!(
                    "dynamnews: {name} has {} entries, expected {n}",
                    v.len()
                )));
            }
        }
        if self
            .unit_cost
            .iter()
            .chain(&self.price)
            .any(|&c| c < 0.0 || !c.is_finite())
        {
            return Err(Error::Config(
                "dynamnews: prices and costs must be finite and >= 0".into(),
            ));
        }
        if !(self.gumbel_scale > 0.0) {
            return Err(Error::Config("dynamnews: gumbel_scale must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-run sales record of a scalar evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamNewsStats {
    pub sold: Vec<u64>,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct DynamNews {
    params: DynamNewsParams,
}

impl DynamNews {
    pub fn new(params: DynamNewsParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &DynamNewsParams {
        &self.params
    }

    /// Scalar run that also reports units sold per product.
    pub fn simulate(&self, x: &[i64], seed: u64) -> Result<DynamNewsStats> {
        check_dim(self.dim(), x.len())?;
        let input: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let mut sold = vec![0; self.params.n_products];
        let objective = self.run(
            &input,
            &mut ScalarTracer::new(),
            &mut SimRng::new(seed),
            Some(&mut sold),
        )?;
        Ok(DynamNewsStats { sold, objective })
    }

    fn run<V: PeekNum>(
        &self,
        x: &[V],
        tracer: &mut V::Tracer,
        rng: &mut SimRng,
        mut sold: Option<&mut Vec<u64>>,
    ) -> Result<V> {
        let p = &self.params;
        let n = p.n_products;
        check_dim(self.dim(), x.len())?;
        let zero = V::constant(0.0);
        let mut stock: Vec<V> = x[..n].iter().map(|v| v.max(&zero)).collect();
        let prices: Option<Vec<V>> = p
            .price_variables
            .then(|| x[n..].iter().map(|v| v.max(&zero)).collect());

        let mut cost = V::constant(0.0);
        if !p.charge_sold_only {
            for (s, &c) in stock.iter().zip(&p.unit_cost) {
                cost += s.clone() * c;
            }
        }
        let mut revenue = V::constant(0.0);
        let mut score = vec![0.0; n];
        let mut tried = vec![false; n];
        for _ in 0..p.n_customers {
            for (s, &u) in score.iter_mut().zip(&p.utility) {
                *s = u + rng.gumbel(p.gumbel_scale);
            }
            let walk_away = p
                .no_purchase_utility
                .map(|u| u + rng.gumbel(p.gumbel_scale));
            tried.iter_mut().for_each(|t| *t = false);
            loop {
                let mut best: Option<usize> = None;
                for j in 0..n {
                    if !tried[j] && best.is_none_or(|b| score[j] > score[b]) {
                        best = Some(j);
                    }
                }
                let Some(j) = best else { break };
                if walk_away.is_some_and(|w| w > score[j]) {
                    break;
                }
                tried[j] = true;
                if tracer.compare_scalar(&stock[j], Rel::Gt, 0.0) {
                    stock[j] -= 1.0;
                    match &prices {
                        Some(pr) => revenue += &pr[j],
                        None => revenue += p.price[j],
                    }
                    if p.charge_sold_only {
                        cost += p.unit_cost[j];
                    }
                    if let Some(s) = sold.as_deref_mut() {
                        s[j] += 1;
                    }
                    break;
                }
            }
        }
        Ok(revenue - cost)
    }
}

impl ObjectiveModel for DynamNews {
    fn name(&self) -> &str {
        "dynamnews"
    }

    fn dim(&self) -> usize {
        if self.params.price_variables {
            2 * self.params.n_products
        } else {
            self.params.n_products
        }
    }

    fn bounds(&self) -> (Vec<i64>, Vec<i64>) {
        let n = self.params.n_products;
        let mut upper = vec![self.params.max_stock; n];
        if self.params.price_variables {
            upper.extend(std::iter::repeat_n(self.params.max_price, n));
        }
        (vec![0; self.dim()], upper)
    }

    fn is_stochastic(&self) -> bool {
        true
    }

    fn default_point(&self) -> Vec<i64> {
        let n = self.params.n_products;
        let mut x = vec![self.params.init_level; n];
        if self.params.price_variables {
            x.extend(self.params.price.iter().map(|p| p.round() as i64));
        }
        x
    }

    fn evaluate<V: PeekNum>(&self, x: &[V], tracer: &mut V::Tracer, rng: &mut SimRng) -> Result<V> {
        self.run(x, tracer, rng, None)
    }
}
