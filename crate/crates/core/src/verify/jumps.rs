//! Poisson and compound-Poisson verifiers, exact up to a Poisson tail cut.

use std::collections::BTreeMap;

use serde::Serialize;

use super::evaluate_pair;
use crate::error::{finite, invalid, Error, Result};
use crate::field::ScalarField;
use crate::functionals::{entropy_of_values, guard_values, EnergyForm};
use crate::measure::{poisson_truncation, poisson_weights, Atoms, ExpectationPlan, Measure};
use crate::numeric::weighted_sum;
use crate::phi::{certify, Hypothesis, PhiFunction};
use crate::report::DeficitReport;

/// Cap on the support size of an enumerated compound Poisson law.
pub const MAX_LEVY_ATOMS: usize = 200_000;

fn tail_tol(plan: &ExpectationPlan) -> Result<f64> {
    match plan {
        ExpectationPlan::PoissonSum { tail_tol } => Ok(*tail_tol),
        ExpectationPlan::ExactAtoms => Ok(1e-12),
        other => Err(Error::PlanMismatch {
            plan: other.to_string(),
            measure: "compound Poisson law".into(),
        }),
    }
}

fn key(p: &[f64]) -> Vec<i64> {
    p.iter().map(|x| (x * 1e9).round() as i64).collect()
}

/// Law of Σ_{j ≤ N} Y_j with N ~ Poisson(mean) and Y_j ~ ν i.i.d., by
/// conditioning on N up to the tail cut and merging coincident points.
pub fn compound_poisson_atoms(mean: f64, nu: &Atoms, tail_tol: f64) -> Result<Atoms> {
    let d = nu.dim();
    if mean == 0.0 {
        return Ok(Atoms::dirac(&vec![0.0; d]));
    }
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(invalid(format!("compound Poisson mean {mean} must be non-negative")));
    }
    let k = poisson_truncation(mean, tail_tol);
    let pmf = poisson_weights(mean, k);
    let mut total: BTreeMap<Vec<i64>, (Vec<f64>, f64)> = BTreeMap::new();
    let mut layer: BTreeMap<Vec<i64>, (Vec<f64>, f64)> = BTreeMap::new();
    layer.insert(key(&vec![0.0; d]), (vec![0.0; d], 1.0));
    for (n, p) in pmf.iter().enumerate() {
        for (k, (pt, w)) in &layer {
            total.entry(k.clone()).or_insert_with(|| (pt.clone(), 0.0)).1 += p * w;
        }
        if total.len() > MAX_LEVY_ATOMS {
            return Err(invalid(format!(
                "compound Poisson support exceeds {MAX_LEVY_ATOMS} atoms after {n} jumps"
            )));
        }
        if n == k {
            break;
        }
        let mut next: BTreeMap<Vec<i64>, (Vec<f64>, f64)> = BTreeMap::new();
        for (pt, w) in layer.values() {
            for j in 0..nu.len() {
                let q: Vec<f64> = pt.iter().zip(nu.point(j)).map(|(a, b)| a + b).collect();
                next.entry(key(&q)).or_insert_with(|| (q, 0.0)).1 += w * nu.weights()[j];
            }
        }
        layer = next;
    }
    let mut points = Vec::with_capacity(total.len() * d);
    let mut masses = Vec::with_capacity(total.len());
    for (pt, w) in total.into_values() {
        points.extend(pt);
        masses.push(w);
    }
    Atoms::normalized(d, points, masses)
}

/// Ent_{P_λ}(f) ≤ λ·E(Ψ(f, D₁f)) under (H2).
pub fn verify_poisson(phi: &PhiFunction, rate: f64, f: &ScalarField, plan: &ExpectationPlan) -> Result<DeficitReport> {
    certify(phi, Hypothesis::H2)?;
    let mu = Measure::poisson(rate)?;
    let form = EnergyForm::Jump {
        nu: Atoms::dirac(&[1.0]),
        rate,
    };
    evaluate_pair("poisson", phi, &mu, f, &form, 1.0, plan)
}

/// Ent_{P_t}(f) ≤ λt·E(∫Ψ(f, D_y f)dν(y)) for the compound Poisson process
/// with jump rate λ and jump law ν, at time t.
pub fn verify_levy(
    phi: &PhiFunction,
    rate: f64,
    nu: &Atoms,
    t: f64,
    f: &ScalarField,
    plan: &ExpectationPlan,
) -> Result<DeficitReport> {
    certify(phi, Hypothesis::H2)?;
    if !(t > 0.0) || !(rate > 0.0) {
        return Err(invalid("Lévy check needs positive rate and time"));
    }
    let law = Measure::Atoms(compound_poisson_atoms(rate * t, nu, tail_tol(plan)?)?);
    let form = EnergyForm::Jump { nu: nu.clone(), rate };
    let mut r = evaluate_pair("levy", phi, &law, f, &form, t, &ExpectationPlan::ExactAtoms)?;
    r.plan = plan.to_string();
    Ok(r)
}

struct Chain {
    d: usize,
    n: usize,
    incs: Vec<Atoms>,
}

impl Chain {
    /// Every path (x₁, …, x_n) from increments `from..n` started at `start`.
    fn paths(&self, start: &[f64], from: usize) -> Vec<(Vec<f64>, f64)> {
        let mut out = vec![(start.to_vec(), 1.0)];
        for inc in &self.incs[from..] {
            let mut next = Vec::with_capacity(out.len() * inc.len());
            for (path, w) in &out {
                let last = &path[path.len() - self.d..];
                for j in 0..inc.len() {
                    let mut p = path.clone();
                    p.extend(last.iter().zip(inc.point(j)).map(|(a, b)| a + b));
                    next.push((p, w * inc.weights()[j]));
                }
            }
            out = next;
        }
        out.into_iter()
            .map(|(p, w)| (p[self.d..].to_vec(), w))
            .collect()
    }

    fn flatten(&self, paths: Vec<(Vec<f64>, f64)>) -> Result<Atoms> {
        let mut points = Vec::with_capacity(paths.len() * self.n * self.d);
        let mut masses = Vec::with_capacity(paths.len());
        for (p, w) in paths {
            points.extend(p);
            masses.push(w);
        }
        Atoms::normalized(self.n * self.d, points, masses)
    }
}

/// E∫Ψ(F, D_y^{i..n}F)dν(y): the jump y added to blocks i..n (0-based i).
fn shifted_energy(phi: &PhiFunction, law: &Atoms, nu: &Atoms, f: &ScalarField, d: usize, i: usize) -> Result<f64> {
    let mut terms = Vec::with_capacity(law.len());
    for a in 0..law.len() {
        let x = law.point(a);
        let mut u = [f.eval(x)];
        guard_values(phi, &mut u, f.name())?;
        let mut inner = Vec::with_capacity(nu.len());
        for j in 0..nu.len() {
            let y = nu.point(j);
            let shifted: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(k, xk)| if k / d >= i { xk + y[k % d] } else { *xk })
                .collect();
            let mut w = [f.eval(&shifted)];
            guard_values(phi, &mut w, "shifted value")?;
            inner.push(phi.psi_unchecked(u[0], w[0] - u[0]));
        }
        terms.push(weighted_sum(nu.weights(), &inner));
    }
    finite("multi-time jump energy", weighted_sum(law.weights(), &terms))
}

fn entropy_on(phi: &PhiFunction, law: &Atoms, f: &ScalarField) -> Result<(f64, bool)> {
    let mut v: Vec<f64> = (0..law.len()).map(|a| f.eval(law.point(a))).collect();
    for x in &v {
        finite(f.name(), *x)?;
    }
    let clamped = guard_values(phi, &mut v, f.name())?;
    Ok((entropy_of_values(phi, law.weights(), &v)?, clamped))
}

/// Ent(F(X_{t₁}, …, X_{t_n})) ≤ λ·E(Σᵢ(tᵢ − tᵢ₋₁)∫Ψ(F, D_y^{i..n}F)dν(y))
/// for n ≤ 3. For n ≥ 2 the conditional decomposition on X_{t₁} is replayed
/// and each of its bounding steps is attached as a part.
pub fn verify_levy_multitime(
    phi: &PhiFunction,
    rate: f64,
    nu: &Atoms,
    times: &[f64],
    big_f: &ScalarField,
    plan: &ExpectationPlan,
) -> Result<DeficitReport> {
    let n = times.len();
    if n == 0 || n > 3 {
        return Err(invalid(format!("multi-time Lévy check supports 1 to 3 times, got {n}")));
    }
    if times[0] < 0.0 || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("times must be non-negative and non-decreasing"));
    }
    if !(rate > 0.0) {
        return Err(invalid("jump rate must be positive"));
    }
    let d = nu.dim();
    if big_f.arity() != n * d {
        return Err(invalid("F must take one jump-space point per time"));
    }
    certify(phi, Hypothesis::H2)?;
    let tol = tail_tol(plan)?;
    let gaps: Vec<f64> = (0..n).map(|i| times[i] - if i == 0 { 0.0 } else { times[i - 1] }).collect();
    let incs = gaps
        .iter()
        .map(|g| compound_poisson_atoms(rate * g, nu, tol))
        .collect::<Result<Vec<_>>>()?;
    let chain = Chain { d, n, incs };
    let paths = chain.paths(&vec![0.0; d], 0);
    if paths.len() > MAX_LEVY_ATOMS {
        return Err(invalid("joint multi-time support is too large"));
    }
    let law = chain.flatten(paths)?;
    let (lhs, clamped) = entropy_on(phi, &law, big_f)?;
    let energies: Vec<f64> = (0..n)
        .map(|i| shifted_energy(phi, &law, nu, big_f, d, i))
        .collect::<Result<_>>()?;
    let rhs: f64 = (0..n).map(|i| rate * gaps[i] * energies[i]).sum();
    let mut r = DeficitReport::new("levy_multitime", lhs, rhs, 1.0, big_f.name(), plan.to_string()).clamped(clamped);
    for (i, e) in energies.iter().enumerate() {
        r = r.with_detail(format!("energy_{}", i + 1), *e);
    }
    if n >= 2 {
        r = decomposition_parts(r, phi, rate, nu, &chain, big_f, &gaps, &energies)?;
    }
    Ok(r)
}

#[allow(clippy::too_many_arguments)]
fn decomposition_parts(
    mut r: DeficitReport,
    phi: &PhiFunction,
    rate: f64,
    nu: &Atoms,
    chain: &Chain,
    big_f: &ScalarField,
    gaps: &[f64],
    energies: &[f64],
) -> Result<DeficitReport> {
    let d = chain.d;
    let first = &chain.incs[0];
    // Paths of the later increments from the origin; shifting by a start
    // point a gives the conditional law given X_{t₁} = a.
    let rest = chain.paths(&vec![0.0; d], 1);
    let rest_values = |a: &[f64]| -> Result<Vec<f64>> {
        let mut v: Vec<f64> = rest
            .iter()
            .map(|(p, _)| {
                let mut x = a.to_vec();
                x.extend(p.chunks(d).flat_map(|blk| blk.iter().zip(a).map(|(b, ai)| b + ai)));
                big_f.eval(&x)
            })
            .collect();
        guard_values(phi, &mut v, big_f.name())?;
        Ok(v)
    };
    let rest_weights: Vec<f64> = rest.iter().map(|(_, w)| *w).collect();
    let h = |a: &[f64]| -> Result<f64> { Ok(weighted_sum(&rest_weights, &rest_values(a)?)) };

    let mut cond = Vec::with_capacity(first.len());
    let mut means = Vec::with_capacity(first.len());
    for a in 0..first.len() {
        let v = rest_values(first.point(a))?;
        cond.push(entropy_of_values(phi, &rest_weights, &v)?);
        means.push(weighted_sum(&rest_weights, &v));
    }
    let expected_conditional = weighted_sum(first.weights(), &cond);
    let of_mean = entropy_of_values(phi, first.weights(), &means)?;
    let gap = (r.lhs - expected_conditional - of_mean).abs();
    r = r
        .with_detail("expected_conditional", expected_conditional)
        .with_detail("entropy_of_conditional_mean", of_mean)
        .with_detail("decomposition_gap", gap);
    if gap > 1e-10 * r.lhs.abs().max(1.0) {
        r.pass = false;
        r = r.with_note("conditional decomposition does not add up");
    }

    let later: f64 = (1..gaps.len()).map(|i| rate * gaps[i] * energies[i]).sum();
    r = r.with_part(DeficitReport::new(
        "conditional_term",
        expected_conditional,
        later,
        1.0,
        big_f.name(),
        "exact",
    ));

    // Ent(H(X_{t₁})) ≤ λt₁·E∫Ψ(H, D_zH)dν, then Jensen into the full shift.
    let mut h_energy = Vec::with_capacity(first.len());
    for a in 0..first.len() {
        let x = first.point(a);
        let mut terms = Vec::with_capacity(nu.len());
        for j in 0..nu.len() {
            let shifted: Vec<f64> = x.iter().zip(nu.point(j)).map(|(p, q)| p + q).collect();
            terms.push(phi.psi_unchecked(means[a], h(&shifted)? - means[a]));
        }
        h_energy.push(weighted_sum(nu.weights(), &terms));
    }
    let h_energy = finite("mean-term energy", weighted_sum(first.weights(), &h_energy))?;
    let t1 = gaps[0];
    if t1 > 0.0 {
        r = r.with_part(DeficitReport::new(
            "mean_term_inequality",
            of_mean,
            rate * h_energy,
            t1,
            "E(F | X_t1)",
            "exact",
        ));
    }
    r = r.with_part(DeficitReport::new(
        "mean_term_jensen",
        rate * t1 * h_energy,
        rate * t1 * energies[0],
        1.0,
        big_f.name(),
        "exact",
    ));
    Ok(r)
}

/// Ent_{P_{λt}}(f) ≤ 2t·E(Γf/f) with Γf = (λ/2)(D₁f)², for f > 0.
pub fn poisson_l1_lsi(rate: f64, t: f64, f: &ScalarField, plan: &ExpectationPlan) -> Result<DeficitReport> {
    if !(t > 0.0) || !(rate > 0.0) {
        return Err(invalid("L¹ inequality needs positive rate and time"));
    }
    let mu = Measure::poisson(rate * t)?;
    let nodes = mu.discretize(plan)?;
    for i in 0..nodes.len() {
        let k = nodes.point(i)[0];
        for x in [k, k + 1.0] {
            let v = f.eval(&[x]);
            if !(v > 0.0) {
                return Err(invalid(format!("{} must be positive, got {v} at {x}", f.name())));
            }
        }
    }
    let form = EnergyForm::L1Fisher {
        nu: Atoms::dirac(&[1.0]),
        rate,
    };
    evaluate_pair("poisson_l1", &PhiFunction::xlogx(), &mu, f, &form, 2.0 * t, plan)
}

#[derive(Clone, Debug, Serialize)]
pub struct L2Probe {
    pub rate: f64,
    pub thetas: Vec<f64>,
    /// Ent(f_θ²)/E(Γf_θ) with f_θ(k) = e^{θk/2}.
    pub ratios: Vec<f64>,
    /// 2[θe^θ − e^θ + 1]/(e^{θ/2} − 1)², which does not depend on the rate.
    pub closed_form: Vec<f64>,
    pub strictly_increasing: bool,
}

/// Log-Sobolev ratios along exponentials under Poisson(λ). Sums are cut
/// where the tilted law Poisson(λe^θ) has negligible tail.
pub fn poisson_l2_probe(rate: f64, thetas: &[f64], plan: &ExpectationPlan) -> Result<L2Probe> {
    let tol = match plan {
        ExpectationPlan::PoissonSum { tail_tol } => *tail_tol,
        other => {
            return Err(Error::PlanMismatch {
                plan: other.to_string(),
                measure: format!("Poisson({rate})"),
            })
        }
    };
    if !(rate > 0.0) {
        return Err(invalid("Poisson rate must be positive"));
    }
    let xlogx = PhiFunction::xlogx();
    let mut ratios = Vec::with_capacity(thetas.len());
    let mut closed_form = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        if !(theta > 0.0) {
            return Err(invalid("probe exponents θ must be positive"));
        }
        let k = poisson_truncation(rate * theta.exp(), tol).max(poisson_truncation(rate, tol));
        let w = poisson_weights(rate, k);
        let f2: Vec<f64> = (0..=k).map(|j| (theta * j as f64).exp()).collect();
        let ent = entropy_of_values(&xlogx, &w, &f2)?;
        let jump = ((theta / 2.0).exp() - 1.0).powi(2);
        let gamma: Vec<f64> = f2.iter().map(|v| 0.5 * rate * v * jump).collect();
        ratios.push(finite("L² probe", ent / weighted_sum(&w, &gamma))?);
        let e = theta.exp();
        closed_form.push(2.0 * (theta * e - e + 1.0) / jump);
    }
    let strictly_increasing = ratios.windows(2).all(|p| p[1] > p[0]);
    Ok(L2Probe {
        rate,
        thetas: thetas.to_vec(),
        ratios,
        closed_form,
        strictly_increasing,
    })
}
