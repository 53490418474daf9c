//! Tail bounds from functional inequalities, against Monte Carlo tails.
//!
//! Herbst: if Ent_μ(f²) ≤ c·E_μ|∇f|² then for 1-Lipschitz F,
//! E e^{λ(F − EF)} ≤ e^{cλ²/4}; Chernoff with λ = 2t/c gives
//! μ(F − EF ≥ t) ≤ e^{−t²/c}, hence μ(|F − EF| ≥ t) ≤ 2e^{−t²/c}.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{finite, invalid, Error, Result};
use crate::field::ScalarField;
use crate::measure::{ExpectationPlan, Measure};
use crate::numeric::{linspace, pairwise_sum};

pub const DEFAULT_SAMPLES: usize = 1_000_000;

/// 0, 0.25, …, 4.
pub fn default_t_grid() -> Vec<f64> {
    linspace(0.0, 4.0, 17)
}

/// Weighted fit of −ln p = K·t^r + c₁·ln t + c₀ + c₂·t⁻² over a grid of r,
/// on t ≥ 1 where the tail is in its asymptotic regime.
#[derive(Clone, Debug, Serialize)]
pub struct TailFit {
    pub r_hat: f64,
    /// r values whose weighted residual stays within 3.84 of the minimum
    /// (the χ²₁ 95% band when weights are inverse variances of ln p).
    pub r_band: (f64, f64),
    /// K at the theoretical exponent.
    pub k_at_r: f64,
    pub k_at_r_hat: f64,
    pub points: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailReport {
    pub t_grid: Vec<f64>,
    pub bound: Vec<f64>,
    pub empirical: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Closed-form tail when μ is a one-dimensional Gaussian and F the identity.
    pub exact: Option<Vec<f64>>,
    pub r: f64,
    pub regime: String,
    pub fit: Option<TailFit>,
    pub degenerate: bool,
    /// empirical ≤ bound + 3·stderr at every t (vacuous without a bound).
    pub dominated: bool,
}

impl TailReport {
    /// Columns t, bound, empirical, stderr.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "bound", "empirical", "stderr"])?;
        for i in 0..self.t_grid.len() {
            w.write_record([
                self.t_grid[i].to_string(),
                self.bound[i].to_string(),
                self.empirical[i].to_string(),
                self.std_error[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// 2e^{−t²/c}.
pub fn herbst_bound(c: f64, t: f64) -> f64 {
    2.0 * (-t * t / c).exp()
}

/// P(|X − m| ≥ t) for X ~ N(m, σ²).
pub fn gaussian_two_sided_tail(t: f64, sd: f64) -> f64 {
    erfc(t / (sd * std::f64::consts::SQRT_2))
}

/// Largest observed slope of F over random near and far pairs in a box.
fn lipschitz_of(f: &ScalarField, scale: f64, pairs: usize, seed: u64) -> f64 {
    let map = crate::field::VectorMap::new(f.name(), f.arity(), 1, {
        let f = f.clone();
        move |x| vec![f.eval(x)]
    });
    crate::verify::lipschitz_estimate(&map, scale, pairs, seed)
}

fn samples_of(f: &ScalarField, mu: &Measure, n: usize, seed: u64) -> Result<(Vec<f64>, f64)> {
    if n < 2 {
        return Err(invalid("need at least two samples"));
    }
    if f.arity() != mu.dim() {
        return Err(invalid("F's arity differs from the measure's dimension"));
    }
    let d = mu.dim();
    let xs = mu.sample(n, seed)?;
    let vals: Vec<f64> = xs.par_chunks(d).map(|x| f.eval(x)).collect();
    for v in &vals {
        finite(f.name(), *v)?;
    }
    let plan = ExpectationPlan::default_for(mu);
    let mean = if plan.is_monte_carlo() {
        pairwise_sum(&vals) / n as f64
    } else {
        mu.expect(f, &plan)?
    };
    Ok((vals, mean))
}

fn exceedance(vals: &[f64], pred: impl Fn(f64) -> bool + Sync) -> (f64, f64) {
    let n = vals.len() as f64;
    let hits = vals.par_iter().filter(|v| pred(**v)).count() as f64;
    let p = hits / n;
    (p, (p * (1.0 - p) / n).sqrt())
}

/// Two-sided Monte Carlo tails of F under μ against 2e^{−t²/c}.
pub fn herbst_gaussian_tail(
    c: f64,
    f: &ScalarField,
    mu: &Measure,
    t_grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<TailReport> {
    if !(c > 0.0) {
        return Err(invalid("log-Sobolev constant must be positive"));
    }
    let slope = lipschitz_of(f, 6.0, 4000, seed ^ 0x5bd1);
    if slope > 1.0 + 1e-6 {
        return Err(Error::Incompatible(format!("{} is not 1-Lipschitz (slope {slope:.6})", f.name())));
    }
    let (vals, mean) = samples_of(f, mu, n, seed)?;
    let mut empirical = Vec::with_capacity(t_grid.len());
    let mut std_error = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let (p, se) = exceedance(&vals, |v| (v - mean).abs() >= t);
        empirical.push(p);
        std_error.push(se);
    }
    let bound: Vec<f64> = t_grid.iter().map(|t| herbst_bound(c, *t)).collect();
    let dominated = (0..t_grid.len()).all(|i| empirical[i] <= bound[i] + 3.0 * std_error[i]);
    let exact = match mu {
        Measure::Gaussian(g) if g.dim() == 1 && f.name() == "x1" => {
            Some(t_grid.iter().map(|t| gaussian_two_sided_tail(*t, g.cov()[0].sqrt())).collect())
        }
        _ => None,
    };
    let degenerate = t_grid.iter().zip(&empirical).all(|(t, p)| *t <= 0.0 || *p == 0.0);
    Ok(TailReport {
        t_grid: t_grid.to_vec(),
        bound,
        empirical,
        std_error,
        exact,
        r: 2.0,
        regime: "gaussian".into(),
        fit: None,
        degenerate,
        dominated,
    })
}

fn regime(r: f64) -> &'static str {
    if (r - 2.0).abs() < 1e-12 {
        "gaussian"
    } else if (r - 1.0).abs() < 1e-12 {
        "exponential"
    } else {
        "intermediate"
    }
}

/// Weighted least squares of y on columns; returns coefficients and RSS.
fn wls(cols: &[Vec<f64>], y: &[f64], w: &[f64]) -> Option<(Vec<f64>, f64)> {
    let k = cols.len();
    let mut a = nalgebra::DMatrix::<f64>::zeros(k, k);
    let mut b = nalgebra::DVector::<f64>::zeros(k);
    for i in 0..y.len() {
        for p in 0..k {
            b[p] += w[i] * cols[p][i] * y[i];
            for q in 0..k {
                a[(p, q)] += w[i] * cols[p][i] * cols[q][i];
            }
        }
    }
    let beta = a.lu().solve(&b)?;
    let rss = (0..y.len())
        .map(|i| {
            let fit: f64 = (0..k).map(|p| beta[p] * cols[p][i]).sum();
            w[i] * (y[i] - fit).powi(2)
        })
        .sum();
    Some((beta.iter().cloned().collect(), rss))
}

/// Fit −ln p = K·t^r + c₁·ln t + c₀ + c₂·t⁻² with weights (inverse
/// variances of ln p, i.e. exceedance counts) over r ∈ [0.5, 3]. Needs six
/// points with t ≥ 1 and p > 0.
pub fn fit_tail_exponent(t: &[f64], p: &[f64], weights: &[f64], r_theory: f64) -> Option<TailFit> {
    let idx: Vec<usize> = (0..t.len()).filter(|&i| t[i] >= 1.0 && p[i] > 0.0 && weights[i] > 0.0).collect();
    if idx.len() < 6 {
        return None;
    }
    let ts: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| -p[i].ln()).collect();
    let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
    let logs: Vec<f64> = ts.iter().map(|x| x.ln()).collect();
    let ones = vec![1.0; ts.len()];
    let inv_sq: Vec<f64> = ts.iter().map(|x| x.powi(-2)).collect();
    let fit_at = |r: f64| {
        let pw: Vec<f64> = ts.iter().map(|x| x.powf(r)).collect();
        wls(&[pw, logs.clone(), ones.clone(), inv_sq.clone()], &y, &w)
    };
    let grid = linspace(0.5, 3.0, 251);
    let profile: Vec<(f64, f64, f64)> = grid
        .iter()
        .filter_map(|&r| fit_at(r).map(|(beta, rss)| (r, rss, beta[0])))
        .collect();
    let best = profile.iter().cloned().min_by(|a, b| a.1.total_cmp(&b.1))?;
    let inside: Vec<f64> = profile
        .iter()
        .filter(|(_, rss, _)| rss - best.1 <= 3.84)
        .map(|(r, _, _)| *r)
        .collect();
    let band = (
        inside.iter().cloned().fold(f64::INFINITY, f64::min),
        inside.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    Some(TailFit {
        r_hat: best.0,
        r_band: band,
        k_at_r: fit_at(r_theory)?.0[0],
        k_at_r_hat: best.2,
        points: ts.len(),
    })
}

/// One-sided tails μ(F − EF > √C·t) for the inequality family with
/// exponent a, against the shape e^{−K t^r}, r = 2/(2 − a). K is fitted.
pub fn beckner_tail(
    big_c: f64,
    a: f64,
    f: &ScalarField,
    mu: &Measure,
    t_grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<TailReport> {
    if !(big_c > 0.0) || !(0.0..=1.0).contains(&a) {
        return Err(invalid("need C > 0 and a ∈ [0, 1]"));
    }
    let r = 2.0 / (2.0 - a);
    let (vals, mean) = samples_of(f, mu, n, seed)?;
    let scale = big_c.sqrt();
    let mut empirical = Vec::with_capacity(t_grid.len());
    let mut std_error = Vec::with_capacity(t_grid.len());
    let mut counts = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let (p, se) = exceedance(&vals, |v| v - mean > scale * t);
        empirical.push(p);
        std_error.push(se);
        counts.push(p * n as f64);
    }
    let degenerate = t_grid.iter().zip(&empirical).all(|(t, p)| *t <= 0.0 || *p == 0.0);
    if degenerate {
        return Ok(TailReport {
            t_grid: t_grid.to_vec(),
            bound: vec![f64::NAN; t_grid.len()],
            empirical,
            std_error,
            exact: None,
            r,
            regime: regime(r).into(),
            fit: None,
            degenerate,
            dominated: true,
        });
    }
    let fit = fit_tail_exponent(t_grid, &empirical, &counts, r);
    let bound: Vec<f64> = match &fit {
        Some(ft) => t_grid.iter().map(|t| (-ft.k_at_r * t.powf(r)).exp().min(1.0)).collect(),
        None => vec![f64::NAN; t_grid.len()],
    };
    Ok(TailReport {
        t_grid: t_grid.to_vec(),
        bound,
        empirical,
        std_error,
        exact: None,
        r,
        regime: regime(r).into(),
        fit,
        degenerate,
        dominated: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn herbst_dominates_exact_normal_tail() {
        for t in linspace(0.0, 4.0, 161) {
            assert!(gaussian_two_sided_tail(t, 1.0) <= herbst_bound(2.0, t) + 1e-15);
        }
        assert_eq!(herbst_bound(2.0, 0.0), 2.0);
        assert!(herbst_bound(3.0, 1.5) > herbst_bound(2.0, 1.5));
    }

    #[test]
    fn herbst_monte_carlo() {
        let mu = Measure::standard_normal();
        let f = ScalarField::coordinate(1, 0);
        let rep = herbst_gaussian_tail(2.0, &f, &mu, &default_t_grid(), 200_000, 7).unwrap();
        assert!(rep.dominated && !rep.degenerate);
        assert!(rep.empirical[0] == 1.0);
        let exact = rep.exact.as_ref().unwrap();
        for i in 0..exact.len() {
            assert!((rep.empirical[i] - exact[i]).abs() <= 5.0 * rep.std_error[i] + 1e-12);
        }
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,bound,empirical,stderr\n0,2,1,0\n"));
    }

    #[test]
    fn herbst_constant_and_lipschitz() {
        let mu = Measure::standard_normal();
        let c = ScalarField::constant(1, 3.0);
        let rep = herbst_gaussian_tail(2.0, &c, &mu, &[0.0, 0.5, 1.0], 1000, 1).unwrap();
        assert_eq!(rep.empirical, vec![1.0, 0.0, 0.0]);
        let steep = ScalarField::linear(&[2.0], 0.0);
        assert!(herbst_gaussian_tail(2.0, &steep, &mu, &[1.0], 1000, 1).is_err());
    }

    #[test]
    fn exponent_fit_on_exact_tails() {
        let t: Vec<f64> = default_t_grid();
        let p: Vec<f64> = t.iter().map(|x| 0.5 * gaussian_two_sided_tail(*x, 1.0)).collect();
        let w: Vec<f64> = p.iter().map(|q| q * 1e6).collect();
        let fit = fit_tail_exponent(&t, &p, &w, 2.0).unwrap();
        assert!((fit.r_hat - 2.0).abs() < 0.1, "{fit:?}");
        assert!(fit.k_at_r > 0.0);
        assert!(fit.r_band.0 <= 2.0 && 2.0 <= fit.r_band.1);
    }

    #[test]
    fn beckner_tail_regimes() {
        let mu = Measure::standard_normal();
        let f = ScalarField::coordinate(1, 0);
        let rep = beckner_tail(1.0, 1.0, &f, &mu, &default_t_grid(), 1_000_000, 3).unwrap();
        let fit = rep.fit.as_ref().unwrap();
        assert_eq!(rep.regime, "gaussian");
        assert!(fit.k_at_r > 0.0 && fit.r_band.0 <= 2.0 && 2.0 <= fit.r_band.1, "{fit:?}");
        let rep = beckner_tail(1.0, 0.0, &f, &mu, &default_t_grid(), 10_000, 3).unwrap();
        assert_eq!((rep.r, rep.regime.as_str()), (1.0, "exponential"));
        let c = ScalarField::constant(1, 1.0);
        let rep = beckner_tail(1.0, 1.0, &c, &mu, &default_t_grid(), 1000, 3).unwrap();
        assert!(rep.degenerate && rep.fit.is_none());
    }
}
