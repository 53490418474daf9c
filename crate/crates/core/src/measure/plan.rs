use std::collections::HashMap;
use std::fmt;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::hermite::GaussHermite;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use super::{Gaussian, Measure};
use crate::error::{finite, invalid, Error, Result};
use crate::field::ScalarField;
use crate::numeric::{pairwise_sum, weighted_sum};

/// Largest node set a deterministic plan may build.
const MAX_NODES: usize = 4_000_000;

/// How an expectation is computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", try_from = "PlanRaw")]
pub enum ExpectationPlan {
    ExactAtoms,
    GaussHermite { order: usize },
    PoissonSum { tail_tol: f64 },
    MonteCarlo { n: usize, seed: u64 },
}

/// Flat wire form, so that keys foreign to the chosen method are rejected.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanRaw {
    method: String,
    order: Option<usize>,
    tail_tol: Option<f64>,
    n: Option<usize>,
    seed: Option<u64>,
}

impl TryFrom<PlanRaw> for ExpectationPlan {
    type Error = String;

    fn try_from(r: PlanRaw) -> std::result::Result<Self, String> {
        let given = [
            ("order", r.order.is_some()),
            ("tail_tol", r.tail_tol.is_some()),
            ("n", r.n.is_some()),
            ("seed", r.seed.is_some()),
        ];
        let allowed: &[&str] = match r.method.as_str() {
            "exact_atoms" => &[],
            "gauss_hermite" => &["order"],
            "poisson_sum" => &["tail_tol"],
            "monte_carlo" => &["n", "seed"],
            other => return Err(format!("unknown plan method `{other}`")),
        };
        if let Some((k, _)) = given.iter().find(|(k, set)| *set && !allowed.contains(k)) {
            return Err(format!("key `{k}` does not apply to method `{}`", r.method));
        }
        Ok(match r.method.as_str() {
            "exact_atoms" => ExpectationPlan::ExactAtoms,
            "gauss_hermite" => ExpectationPlan::GaussHermite {
                order: r.order.unwrap_or(40),
            },
            "poisson_sum" => ExpectationPlan::PoissonSum {
                tail_tol: r.tail_tol.unwrap_or(1e-12),
            },
            _ => ExpectationPlan::MonteCarlo {
                n: r.n.unwrap_or(200_000),
                seed: r.seed.unwrap_or(0),
            },
        })
    }
}

impl fmt::Display for ExpectationPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExpectationPlan::ExactAtoms => write!(f, "exact_atoms"),
            ExpectationPlan::GaussHermite { order } => write!(f, "gauss_hermite({order})"),
            ExpectationPlan::PoissonSum { tail_tol } => write!(f, "poisson_sum({tail_tol:e})"),
            ExpectationPlan::MonteCarlo { n, seed } => write!(f, "monte_carlo(n={n}, seed={seed})"),
        }
    }
}

impl ExpectationPlan {
    pub const GH_DEFAULT: ExpectationPlan = ExpectationPlan::GaussHermite { order: 40 };
    pub const POISSON_DEFAULT: ExpectationPlan = ExpectationPlan::PoissonSum { tail_tol: 1e-12 };

    pub fn monte_carlo(seed: u64) -> Self {
        ExpectationPlan::MonteCarlo { n: 200_000, seed }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self, ExpectationPlan::MonteCarlo { .. })
    }

    /// Exact sums for atoms, Gauss–Hermite up to three Gaussian coordinates,
    /// truncated sums for Poisson leaves, Monte Carlo otherwise.
    pub fn default_for(mu: &Measure) -> Self {
        match mu.leaf_profile() {
            (0, false, _) => ExpectationPlan::ExactAtoms,
            (g, false, _) if g <= 3 => ExpectationPlan::GH_DEFAULT,
            (0, true, _) => ExpectationPlan::POISSON_DEFAULT,
            _ => ExpectationPlan::monte_carlo(0),
        }
    }

    fn check(&self, mu: &Measure) -> Result<()> {
        let (gauss, poisson, _) = mu.leaf_profile();
        let ok = match self {
            ExpectationPlan::ExactAtoms => gauss == 0 && !poisson,
            ExpectationPlan::GaussHermite { order } => *order > 0 && gauss > 0 && !poisson,
            ExpectationPlan::PoissonSum { tail_tol } => {
                *tail_tol > 0.0 && *tail_tol < 1.0 && poisson && gauss == 0
            }
            ExpectationPlan::MonteCarlo { n, .. } => *n > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::PlanMismatch {
                plan: self.to_string(),
                measure: mu.describe(),
            })
        }
    }
}

/// Smallest K with P(N > K) < tail_tol for N ~ Poisson(rate).
pub fn poisson_truncation(rate: f64, tail_tol: f64) -> usize {
    // P(N > K) = P(K + 1, rate), the regularized lower incomplete gamma.
    let mut k = rate.floor() as usize;
    while gamma_lr(k as f64 + 1.0, rate) >= tail_tol {
        k += 1;
    }
    k
}

fn poisson_pmf(rate: f64, k: usize) -> f64 {
    let kf = k as f64;
    (kf * rate.ln() - rate - ln_gamma(kf + 1.0)).exp()
}

/// Poisson pmf on 0..=k, renormalized to total mass one.
pub(crate) fn poisson_weights(rate: f64, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..=k).map(|j| poisson_pmf(rate, j)).collect();
    let total = pairwise_sum(&raw);
    raw.iter().map(|p| p / total).collect()
}

/// Standard normal nodes and weights of the given order, cached.
pub(crate) fn hermite_rule(order: usize) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("hermite cache poisoned");
    map.entry(order)
        .or_insert_with(|| {
            let rule = GaussHermite::new(NonZeroUsize::new(order).expect("order > 0"));
            let norm = std::f64::consts::PI.sqrt();
            let sqrt2 = std::f64::consts::SQRT_2;
            Arc::new(
                rule.iter()
                    .map(|(x, w)| (x * sqrt2, w / norm))
                    .collect(),
            )
        })
        .clone()
}

/// Weighted points standing in for a measure under a plan.
#[derive(Clone, Debug, PartialEq)]
pub struct Nodes {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Nodes {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() != dim * weights.len() {
            return Err(invalid("nodes: point/weight shapes disagree"));
        }
        Ok(Nodes {
            dim,
            points,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// f at every node, evaluated in parallel, in node order.
    pub fn eval(&self, f: &ScalarField, context: &str) -> Result<Vec<f64>> {
        if f.arity() != self.dim {
            return Err(invalid(format!(
                "{}: arity {} on nodes of dimension {}",
                f.name(),
                f.arity(),
                self.dim
            )));
        }
        let values: Vec<f64> = self
            .points
            .par_chunks(self.dim)
            .map(|x| f.eval(x))
            .collect();
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("{context}: {} at {:?}", f.name(), self.point(i)),
                    value: *v,
                });
            }
        }
        Ok(values)
    }

    /// Apply an arbitrary map to each node, in parallel and in order.
    pub fn map<T: Send>(&self, g: impl Fn(&[f64]) -> T + Send + Sync) -> Vec<T> {
        self.points.par_chunks(self.dim).map(g).collect()
    }

    /// Σ wᵢ vᵢ in fixed pairwise order.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        weighted_sum(&self.weights, values)
    }

    pub fn expect(&self, f: &ScalarField) -> Result<f64> {
        let v = self.eval(f, "expectation")?;
        finite("expectation", self.integrate(&v))
    }

    /// Reweight by non-negative factors and renormalize.
    pub fn reweighted(&self, factors: &[f64]) -> Result<Nodes> {
        let raw: Vec<f64> = self.weights.iter().zip(factors).map(|(w, f)| w * f).collect();
        let total = pairwise_sum(&raw);
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::NonFinite {
                context: "reweighting nodes".into(),
                value: total,
            });
        }
        Ok(Nodes {
            dim: self.dim,
            points: self.points.clone(),
            weights: raw.iter().map(|w| w / total).collect(),
        })
    }

    fn tensor(&self, other: &Nodes) -> Result<Nodes> {
        let n = self.len() * other.len();
        if n > MAX_NODES {
            return Err(invalid(format!(
                "tensor product would need {n} nodes; use a Monte Carlo plan"
            )));
        }
        let dim = self.dim + other.dim;
        let mut points = Vec::with_capacity(n * dim);
        let mut weights = Vec::with_capacity(n);
        for i in 0..self.len() {
            for j in 0..other.len() {
                points.extend_from_slice(self.point(i));
                points.extend_from_slice(other.point(j));
                weights.push(self.weights[i] * other.weights[j]);
            }
        }
        Ok(Nodes {
            dim,
            points,
            weights,
        })
    }

    fn summed(&self, other: &Nodes) -> Result<Nodes> {
        let n = self.len() * other.len();
        if n > MAX_NODES {
            return Err(invalid(format!(
                "convolution would need {n} nodes; use a Monte Carlo plan"
            )));
        }
        let dim = self.dim;
        let mut points = Vec::with_capacity(n * dim);
        let mut weights = Vec::with_capacity(n);
        for i in 0..self.len() {
            for j in 0..other.len() {
                let (a, b) = (self.point(i), other.point(j));
                points.extend(a.iter().zip(b).map(|(x, y)| x + y));
                weights.push(self.weights[i] * other.weights[j]);
            }
        }
        Ok(Nodes {
            dim,
            points,
            weights,
        })
    }
}

fn gaussian_nodes(g: &Gaussian, order: usize) -> Result<Nodes> {
    let d = g.dim();
    let rule = hermite_rule(order);
    let n = order
        .checked_pow(d as u32)
        .filter(|n| *n <= MAX_NODES)
        .ok_or_else(|| invalid(format!("gauss_hermite({order}) in dimension {d} is too large")))?;
    let mut points = Vec::with_capacity(n * d);
    let mut weights = Vec::with_capacity(n);
    let mut idx = vec![0usize; d];
    let mut z = vec![0.0; d];
    let mut x = vec![0.0; d];
    for _ in 0..n {
        let mut w = 1.0;
        for k in 0..d {
            z[k] = rule[idx[k]].0;
            w *= rule[idx[k]].1;
        }
        g.transform(&z, &mut x);
        points.extend_from_slice(&x);
        weights.push(w);
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < order {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(Nodes {
        dim: d,
        points,
        weights,
    })
}

impl Measure {
    /// Weighted nodes representing this measure under the plan.
    pub fn discretize(&self, plan: &ExpectationPlan) -> Result<Nodes> {
        plan.check(self)?;
        if let ExpectationPlan::MonteCarlo { n, seed } = plan {
            let points = self.sample(*n, *seed)?;
            let w = 1.0 / *n as f64;
            return Nodes::new(self.dim(), points, vec![w; *n]);
        }
        self.discretize_inner(plan)
    }

    fn discretize_inner(&self, plan: &ExpectationPlan) -> Result<Nodes> {
        match self {
            Measure::Atoms(a) => Nodes::new(a.dim(), a.points().to_vec(), a.weights().to_vec()),
            Measure::Gaussian(g) => match plan {
                ExpectationPlan::GaussHermite { order } => gaussian_nodes(g, *order),
                _ => Err(Error::PlanMismatch {
                    plan: plan.to_string(),
                    measure: self.describe(),
                }),
            },
            Measure::PoissonLaw { rate } => match plan {
                ExpectationPlan::PoissonSum { tail_tol } => {
                    let k = poisson_truncation(*rate, *tail_tol);
                    let points: Vec<f64> = (0..=k).map(|i| i as f64).collect();
                    let pmf: Vec<f64> = (0..=k).map(|i| poisson_pmf(*rate, i)).collect();
                    let total = pairwise_sum(&pmf);
                    Nodes::new(1, points, pmf.iter().map(|p| p / total).collect())
                }
                _ => Err(Error::PlanMismatch {
                    plan: plan.to_string(),
                    measure: self.describe(),
                }),
            },
            Measure::Product(fs) => {
                let mut acc = fs[0].discretize_inner(plan)?;
                for m in &fs[1..] {
                    acc = acc.tensor(&m.discretize_inner(plan)?)?;
                }
                Ok(acc)
            }
            Measure::Convolution(ps) => {
                let mut acc = ps[0].discretize_inner(plan)?;
                for m in &ps[1..] {
                    let next = m.discretize_inner(plan)?;
                    if next.dim != acc.dim {
                        return Err(invalid("convolution factors live in different dimensions"));
                    }
                    acc = acc.summed(&next)?;
                }
                Ok(acc)
            }
            Measure::Pushforward { map, base } => {
                let nodes = base.discretize_inner(plan)?;
                let mapped = nodes.map(|x| map.apply(x));
                let mut points = Vec::with_capacity(mapped.len() * map.out_dim());
                for p in mapped {
                    if p.len() != map.out_dim() {
                        return Err(invalid(format!("map {} returned a wrong-sized point", map.name())));
                    }
                    points.extend(p);
                }
                Nodes::new(map.out_dim(), points, nodes.weights.clone())
            }
            Measure::Tilt(t) => {
                let nodes = t.base().discretize_inner(plan)?;
                let b = nodes.eval(t.potential(), "tilt potential")?;
                let top = b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let factors: Vec<f64> = b.iter().map(|v| (v - top).exp()).collect();
                nodes.reweighted(&factors)
            }
        }
    }
}
