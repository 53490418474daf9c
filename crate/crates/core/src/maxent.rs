//! Maximum Φ-entropy densities under one linear constraint, and discrete
//! sub-additivity experiments.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{finite, invalid, Error, Result};
use crate::field::ScalarField;
use crate::functionals::shannon_phi_entropy;
use crate::measure::Atoms;
use crate::numeric::{pairwise_sum, weighted_sum};
use crate::phi::PhiFunction;

/// Maximize H^Φ(f) = −∫Φ̂(f)dx over densities on a uniform grid subject to
/// ∫f = 1 and ∫W f = c.
#[derive(Clone, Debug)]
pub struct MaxentProblem {
    pub phi: PhiFunction,
    pub w: ScalarField,
    pub c: f64,
    pub grid: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NewtonStep {
    pub lambda: f64,
    pub beta: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MaxentSolution {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    pub lambda: f64,
    pub beta: f64,
    /// Some grid values were clipped at the lower end of the domain.
    pub clipped: bool,
    pub mass: f64,
    pub moment: f64,
    pub entropy: f64,
    pub trace: Vec<NewtonStep>,
}

impl MaxentSolution {
    /// Columns x, f.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "f"])?;
        for (x, f) in self.x.iter().zip(&self.density) {
            w.write_record([x.to_string(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// (Φ̂')⁻¹ with Φ̂' = Φ' − Φ(1) on the non-negative part of I.
struct Inverse {
    phi: PhiFunction,
    offset: f64,
    floor: f64,
    floor_slope: f64,
}

impl Inverse {
    fn new(phi: &PhiFunction) -> Result<Self> {
        let phi = phi.normalized_at_zero()?;
        let floor = phi.interval().lo.max(0.0);
        let offset = phi.eval(1.0);
        let floor_slope = phi.d1(floor) - offset;
        Ok(Inverse {
            phi,
            offset,
            floor,
            floor_slope,
        })
    }

    fn slope(&self, u: f64) -> f64 {
        self.phi.d1(u) - self.offset
    }

    /// Returns the preimage and whether it was clipped to the floor.
    fn at(&self, y: f64) -> (f64, bool) {
        if y <= self.floor_slope {
            return (self.floor, self.floor_slope.is_finite());
        }
        let mut hi = (self.floor + 1.0).max(1.0);
        while self.slope(hi) < y {
            hi *= 2.0;
            if hi > 1e300 {
                return (f64::INFINITY, false);
            }
        }
        let mut lo = self.floor;
        for _ in 0..300 {
            let mid = if lo > 0.0 && hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
            if mid <= lo || mid >= hi {
                break;
            }
            if self.slope(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi), false)
    }
}

fn trapezoid_weights(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.len() < 3 {
        return Err(invalid("maxent grid needs at least three points"));
    }
    let h = grid[1] - grid[0];
    if !(h > 0.0) || grid.windows(2).any(|p| ((p[1] - p[0]) - h).abs() > 1e-9 * h.max(1.0)) {
        return Err(invalid("maxent grid must be uniform and increasing"));
    }
    let mut w = vec![h; grid.len()];
    w[0] *= 0.5;
    *w.last_mut().expect("non-empty") *= 0.5;
    Ok(w)
}

struct Dual<'a> {
    inv: &'a Inverse,
    w: &'a [f64],
    stat: &'a [f64],
    c: f64,
}

struct DualEval {
    value: f64,
    grad: [f64; 2],
    hess: [f64; 3],
    density: Vec<f64>,
    clipped: bool,
}

impl Dual<'_> {
    /// D(λ, β) = ∫Φ̂*(−λ − βW) + λ + βc, convex, minimized at the solution.
    fn eval(&self, lambda: f64, beta: f64) -> Option<DualEval> {
        let n = self.w.len();
        let mut density = Vec::with_capacity(n);
        let mut conj = Vec::with_capacity(n);
        let mut curv = Vec::with_capacity(n);
        let mut clipped = false;
        for i in 0..n {
            let y = -lambda - beta * self.stat[i];
            let (f, cl) = self.inv.at(y);
            if !f.is_finite() {
                return None;
            }
            clipped |= cl;
            let phi_hat = self.inv.phi.eval(f) - self.inv.offset * f;
            conj.push(y * f - phi_hat);
            curv.push(if cl { 0.0 } else { 1.0 / self.inv.phi.d2(f) });
            density.push(f);
        }
        let mass = weighted_sum(self.w, &density);
        let wf: Vec<f64> = density.iter().zip(self.stat).map(|(f, s)| f * s).collect();
        let moment = weighted_sum(self.w, &wf);
        let h00 = weighted_sum(self.w, &curv);
        let c1: Vec<f64> = curv.iter().zip(self.stat).map(|(k, s)| k * s).collect();
        let c2: Vec<f64> = c1.iter().zip(self.stat).map(|(k, s)| k * s).collect();
        let value = weighted_sum(self.w, &conj) + lambda + beta * self.c;
        value.is_finite().then(|| DualEval {
            value,
            grad: [1.0 - mass, self.c - moment],
            hess: [h00, weighted_sum(self.w, &c1), weighted_sum(self.w, &c2)],
            density,
            clipped,
        })
    }
}

const MAX_NEWTON: usize = 200;

/// Dual Newton iteration with backtracking on the convex dual.
pub fn solve_maxent(problem: &MaxentProblem) -> Result<MaxentSolution> {
    if problem.w.arity() != 1 {
        return Err(invalid("maxent statistic must be univariate"));
    }
    let weights = trapezoid_weights(&problem.grid)?;
    let stat: Vec<f64> = problem.grid.iter().map(|x| problem.w.eval(&[*x])).collect();
    for s in &stat {
        finite("constraint statistic", *s)?;
    }
    let (smin, smax) = stat
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(*s), b.max(*s)));
    if !(problem.c > smin && problem.c < smax) {
        return Err(Error::Infeasible(format!(
            "target {} lies outside the open range ({smin}, {smax}) of W on the grid",
            problem.c
        )));
    }
    let inv = Inverse::new(&problem.phi)?;
    let dual = Dual {
        inv: &inv,
        w: &weights,
        stat: &stat,
        c: problem.c,
    };

    // Start from the uniform density: β = 0 and λ with ∫f = 1.
    let width = problem.grid.last().expect("non-empty") - problem.grid[0];
    let mut lambda = -inv.slope(1.0 / width);
    let mut beta = 0.0;
    let mut cur = dual.eval(lambda, beta).ok_or_else(|| invalid("maxent start is not finite"))?;
    let mut trace = Vec::new();
    for _ in 0..MAX_NEWTON {
        let residual = cur.grad[0].abs().max(cur.grad[1].abs());
        trace.push(NewtonStep { lambda, beta, residual });
        if residual < 1e-12 {
            break;
        }
        let [a, b, d] = cur.hess;
        let det = a * d - b * b;
        let (dl, db) = if det > 1e-300 * (a * d).abs().max(1.0) && det.is_finite() {
            (-(d * cur.grad[0] - b * cur.grad[1]) / det, -(a * cur.grad[1] - b * cur.grad[0]) / det)
        } else {
            (-cur.grad[0], -cur.grad[1])
        };
        let slope = cur.grad[0] * dl + cur.grad[1] * db;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            if let Some(next) = dual.eval(lambda + step * dl, beta + step * db) {
                if next.value <= cur.value + 1e-4 * step * slope + 1e-14 * cur.value.abs() {
                    accepted = Some(next);
                    break;
                }
            }
            step *= 0.5;
        }
        let Some(next) = accepted else { break };
        lambda += step * dl;
        beta += step * db;
        cur = next;
    }
    let residual = cur.grad[0].abs().max(cur.grad[1].abs());
    if residual > 1e-9 {
        return Err(Error::NoConvergence {
            solver: "maxent dual Newton".into(),
            iterations: trace.len(),
            residual,
        });
    }
    let mass = weighted_sum(&weights, &cur.density);
    let wf: Vec<f64> = cur.density.iter().zip(&stat).map(|(f, s)| f * s).collect();
    let moment = weighted_sum(&weights, &wf);
    let phi_hat: Vec<f64> = cur.density.iter().map(|f| inv.phi.eval(*f) - inv.offset * f).collect();
    Ok(MaxentSolution {
        x: problem.grid.clone(),
        density: cur.density,
        lambda,
        beta,
        clipped: cur.clipped,
        mass,
        moment,
        entropy: -weighted_sum(&weights, &phi_hat),
        trace,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SubadditivityReport {
    pub phi: String,
    /// Whether the inequalities below are asserted (x log x) or tabulated.
    pub asserted: bool,
    pub joint_entropy: f64,
    pub marginal_entropies: Vec<f64>,
    /// Σ H(Xᵢ) − H(X₁, …, X_n).
    pub joint_gap: f64,
    /// Ent_μ(f) − Σ Ent_{μᵢ}(∫f dμ_∖ᵢ) for each random trial f.
    pub marginal_gaps: Vec<f64>,
    /// The same gap for a tensor-product f.
    pub tensor_gap: f64,
    pub negative_trials: usize,
    pub pass: bool,
}

/// Distinct values of coordinate k and each atom's index into them.
fn coordinate_levels(joint: &Atoms, k: usize) -> (Vec<f64>, Vec<usize>) {
    let mut levels: Vec<f64> = (0..joint.len()).map(|i| joint.point(i)[k]).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let idx = (0..joint.len())
        .map(|i| levels.partition_point(|v| *v < joint.point(i)[k]))
        .collect();
    (levels, idx)
}

/// Ent under a product of marginals of f (values on the product grid) minus
/// the sum of entropies of its coordinate averages.
fn marginal_gap(phi: &PhiFunction, marg: &[Vec<f64>], f: &[f64]) -> Result<f64> {
    let n = marg.len();
    let sizes: Vec<usize> = marg.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().product();
    let mut weights = vec![1.0; total];
    let mut coords = vec![vec![0usize; n]; total];
    for (j, (w, c)) in weights.iter_mut().zip(coords.iter_mut()).enumerate() {
        let mut rem = j;
        for k in (0..n).rev() {
            c[k] = rem % sizes[k];
            rem /= sizes[k];
            *w *= marg[k][c[k]];
        }
    }
    let ent = crate::functionals::entropy_of_values(phi, &weights, f)?;
    let mut sum = 0.0;
    for k in 0..n {
        let mut avg = vec![0.0; sizes[k]];
        for j in 0..total {
            avg[coords[j][k]] += weights[j] * f[j] / marg[k][coords[j][k]];
        }
        sum += crate::functionals::entropy_of_values(phi, &marg[k], &avg)?;
    }
    Ok(ent - sum)
}

/// Joint-versus-marginal Shannon Φ-entropy and the reversed sub-additivity
/// of Ent under the product of the joint's marginals, on random positive f.
pub fn subadditivity_experiment(phi: &PhiFunction, joint: &Atoms, n_trials: usize, seed: u64) -> Result<SubadditivityReport> {
    let n = joint.dim();
    if n < 2 {
        return Err(invalid("sub-additivity needs a joint law of at least two coordinates"));
    }
    let mut marg = Vec::with_capacity(n);
    let mut marginal_entropies = Vec::with_capacity(n);
    for k in 0..n {
        let (levels, idx) = coordinate_levels(joint, k);
        let mut p = vec![0.0; levels.len()];
        for (i, j) in idx.iter().enumerate() {
            p[*j] += joint.weights()[i];
        }
        let total = pairwise_sum(&p);
        p.iter_mut().for_each(|x| *x /= total);
        marginal_entropies.push(shannon_phi_entropy(phi, &p)?);
        marg.push(p);
    }
    let joint_entropy = shannon_phi_entropy(phi, joint.weights())?;
    let joint_gap = marginal_entropies.iter().sum::<f64>() - joint_entropy;

    let sizes: Vec<usize> = marg.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().product();
    if total > 1_000_000 {
        return Err(invalid("product of marginals is too large"));
    }
    let iv = phi.interval();
    let (lo, hi) = (iv.lo.max(0.0) + 0.05, if iv.hi.is_finite() { iv.hi } else { 3.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut marginal_gaps = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let f: Vec<f64> = (0..total).map(|_| rng.random_range(lo..hi)).collect();
        marginal_gaps.push(marginal_gap(phi, &marg, &f)?);
    }
    let factors: Vec<Vec<f64>> = sizes.iter().map(|s| (0..*s).map(|_| rng.random_range(lo..hi)).collect()).collect();
    let tensor: Vec<f64> = (0..total)
        .map(|j| {
            let mut rem = j;
            let mut v = 1.0;
            for k in (0..n).rev() {
                v *= factors[k][rem % sizes[k]];
                rem /= sizes[k];
            }
            v
        })
        .collect();
    let tensor_gap = marginal_gap(phi, &marg, &tensor)?;
    let negative_trials = marginal_gaps.iter().filter(|g| **g < -1e-12).count();
    let asserted = phi.name() == "xlogx";
    let pass = !asserted || (joint_gap >= -1e-12 && negative_trials == 0);
    Ok(SubadditivityReport {
        phi: phi.name().to_string(),
        asserted,
        joint_entropy,
        marginal_entropies,
        joint_gap,
        marginal_gaps,
        tensor_gap,
        negative_trials,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::linspace;

    fn normal_problem() -> MaxentProblem {
        MaxentProblem {
            phi: PhiFunction::xlogx(),
            w: ScalarField::univariate("x^2", |x| x * x, |x| 2.0 * x),
            c: 1.0,
            grid: linspace(-12.0, 12.0, 4801),
        }
    }

    #[test]
    fn gaussian_is_the_maximizer() {
        let sol = solve_maxent(&normal_problem()).unwrap();
        assert!((sol.mass - 1.0).abs() < 1e-8 && (sol.moment - 1.0).abs() < 1e-6);
        assert!((sol.beta - 0.5).abs() < 1e-6, "β = {}", sol.beta);
        let worst = sol
            .x
            .iter()
            .zip(&sol.density)
            .filter(|(x, _)| x.abs() <= 5.0)
            .map(|(x, f)| (f - (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "{worst}");
        assert!(!sol.clipped);
    }

    #[test]
    fn square_phi_gives_affine_density() {
        let grid = linspace(0.0, 1.0, 1001);
        let p = MaxentProblem {
            phi: PhiFunction::square(),
            w: ScalarField::coordinate(1, 0),
            c: 0.5,
            grid: grid.clone(),
        };
        let sol = solve_maxent(&p).unwrap();
        assert!(sol.density.iter().all(|f| (f - 1.0).abs() < 1e-9));
        let p = MaxentProblem { c: 0.6, ..p };
        let sol = solve_maxent(&p).unwrap();
        // Affine density with mean 0.6 on [0, 1]: f(x) = 1 + 1.2(x − ½), up to
        // the O(h²) trapezoid error in the moment constraint.
        for (x, f) in grid.iter().zip(&sol.density) {
            assert!((f - (1.0 + 1.2 * (x - 0.5))).abs() < 1e-5, "{x} {f}");
        }
    }

    #[test]
    fn power_phi_clips() {
        let p = MaxentProblem {
            phi: PhiFunction::power(1.5).unwrap(),
            w: ScalarField::univariate("x^2", |x| x * x, |x| 2.0 * x),
            c: 1.0,
            grid: linspace(-6.0, 6.0, 2401),
        };
        let sol = solve_maxent(&p).unwrap();
        assert!(sol.clipped && (sol.mass - 1.0).abs() < 1e-8 && (sol.moment - 1.0).abs() < 1e-6);
        assert!(sol.density.iter().all(|f| *f >= 0.0));
    }

    #[test]
    fn infeasible_target() {
        let p = MaxentProblem {
            c: -1.0,
            ..normal_problem()
        };
        assert!(matches!(solve_maxent(&p), Err(Error::Infeasible(_))));
    }

    #[test]
    fn csv_export() {
        let sol = solve_maxent(&normal_problem()).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x,f\n-12,"));
    }

    #[test]
    fn independent_joint_is_additive() {
        let (pa, pb) = ([0.2, 0.8], [0.1, 0.6, 0.3]);
        let mut pts = Vec::new();
        let mut w = Vec::new();
        for (i, a) in pa.iter().enumerate() {
            for (j, b) in pb.iter().enumerate() {
                pts.extend([i as f64, j as f64]);
                w.push(a * b);
            }
        }
        let joint = Atoms::new(2, pts, w).unwrap();
        let r = subadditivity_experiment(&PhiFunction::xlogx(), &joint, 50, 1).unwrap();
        assert!(r.joint_gap.abs() < 1e-12 && r.pass);
        assert!(r.tensor_gap.abs() < 1e-12);
        assert!(r.marginal_gaps.iter().all(|g| *g > 0.0));
    }

    #[test]
    fn correlated_pair() {
        let joint = Atoms::new(2, vec![0.0, 0.0, 1.0, 1.0], vec![0.3, 0.7]).unwrap();
        let r = subadditivity_experiment(&PhiFunction::xlogx(), &joint, 10, 2).unwrap();
        let h1 = -(0.3f64 * 0.3f64.ln() + 0.7 * 0.7f64.ln());
        assert!((r.joint_gap - h1).abs() < 1e-12);
        let sq = subadditivity_experiment(&PhiFunction::square(), &joint, 10, 2).unwrap();
        assert!(!sq.asserted && sq.pass);
    }
}
