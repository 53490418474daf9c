//! Entropy-type functionals: Φ-entropy, Φ-variance, relative Φ-entropy,
//! Φ-Fisher information, the duality and variational formulas, conditional
//! decomposition and the Shannon Φ-entropy.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{finite, invalid, Error, Result};
use crate::field::ScalarField;
use crate::measure::{Atoms, ExpectationPlan, Measure, Nodes};
use crate::numeric::{pairwise_sum, weighted_sum};
use crate::phi::PhiFunction;

/// Values closer than this to a finite end of I are clamped onto it.
pub const CLAMP_EPS: f64 = 1e-12;

/// Values further than this outside I are domain errors, not roundoff.
const DOMAIN_SLACK: f64 = 1e-9;

/// Right-hand side functional E^Φ of an inequality.
#[derive(Clone, Debug)]
pub enum EnergyForm {
    /// Φ''(f)|∇f|².
    Diffusion,
    /// Φ''(f)⟨S∇f, ∇f⟩ with S row-major.
    Covariance { s: Vec<f64> },
    /// Φ''(F)·Σ(tᵢ − tᵢ₋₁)(Σ_{j≥i} ∂ⱼF)².
    MultiTime { times: Vec<f64> },
    /// rate·∫Ψ(f, D_y f) dν(y).
    Jump { nu: Atoms, rate: f64 },
    /// Γf/f with Γf = (rate/2)∫(D_y f)² dν(y).
    L1Fisher { nu: Atoms, rate: f64 },
}

impl EnergyForm {
    pub fn validate(&self) -> Result<()> {
        match self {
            EnergyForm::Diffusion => Ok(()),
            EnergyForm::Covariance { s } => {
                let d = (s.len() as f64).sqrt() as usize;
                if d * d != s.len() || d == 0 {
                    return Err(invalid("covariance form: S must be square"));
                }
                Ok(())
            }
            EnergyForm::MultiTime { times } => {
                if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| w[1] < w[0]) {
                    return Err(invalid("multi-time form: times must be non-negative and non-decreasing"));
                }
                Ok(())
            }
            EnergyForm::Jump { rate, .. } | EnergyForm::L1Fisher { rate, .. } => {
                if !(*rate > 0.0) || !rate.is_finite() {
                    return Err(invalid("jump form: rate must be positive"));
                }
                Ok(())
            }
        }
    }

    fn is_diffusive(&self) -> bool {
        matches!(
            self,
            EnergyForm::Diffusion | EnergyForm::Covariance { .. } | EnergyForm::MultiTime { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnergyForm::Diffusion => "diffusion",
            EnergyForm::Covariance { .. } => "covariance",
            EnergyForm::MultiTime { .. } => "multi_time",
            EnergyForm::Jump { .. } => "jump",
            EnergyForm::L1Fisher { .. } => "l1_fisher",
        }
    }
}

/// Σ(tᵢ − tᵢ₋₁)(Σ_{j≥i} vⱼ)² with t₀ = 0.
pub fn multitime_quadratic(times: &[f64], v: &[f64]) -> f64 {
    let mut tail: f64 = v.iter().sum();
    let mut prev = 0.0;
    let mut acc = 0.0;
    for (t, vi) in times.iter().zip(v) {
        acc += (t - prev) * tail * tail;
        tail -= vi;
        prev = *t;
    }
    acc
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyValue {
    pub value: f64,
    pub clamped: bool,
    pub plan: String,
    /// Delta-method standard error, for Monte Carlo plans.
    pub std_error: Option<f64>,
}

/// Clamp values within roundoff of a finite end of I onto I; reject the rest.
pub(crate) fn guard_values(phi: &PhiFunction, values: &mut [f64], what: &str) -> Result<bool> {
    let iv = phi.interval();
    let mut clamped = false;
    for v in values.iter_mut() {
        if iv.lo.is_finite() && *v < iv.lo + CLAMP_EPS {
            if *v < iv.lo - DOMAIN_SLACK {
                return Err(Error::Domain {
                    what: what.to_string(),
                    value: *v,
                    interval: iv.to_string(),
                });
            }
            *v = iv.lo + CLAMP_EPS;
            clamped = true;
        }
        if iv.hi.is_finite() && *v > iv.hi - CLAMP_EPS {
            if *v > iv.hi + DOMAIN_SLACK {
                return Err(Error::Domain {
                    what: what.to_string(),
                    value: *v,
                    interval: iv.to_string(),
                });
            }
            *v = iv.hi - CLAMP_EPS;
            clamped = true;
        }
    }
    Ok(clamped)
}

/// Sample standard deviation of `xs` divided by √n.
pub(crate) fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let m = pairwise_sum(xs) / n;
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    (pairwise_sum(&dev) / (n - 1.0) / n).sqrt()
}

/// Ent^Φ of already-guarded values under node weights, in Bregman form
/// Σ wᵢ Ψ(m, fᵢ − m), m = Σ wᵢ fᵢ, which is non-negative term by term.
pub(crate) fn entropy_of_values(phi: &PhiFunction, weights: &[f64], values: &[f64]) -> Result<f64> {
    let m = weighted_sum(weights, values);
    let m = m.clamp(
        phi.interval().lo + CLAMP_EPS.min(phi.interval().width()),
        phi.interval().hi - CLAMP_EPS.min(phi.interval().width()),
    );
    if values.iter().all(|v| *v == values[0]) {
        return Ok(0.0);
    }
    let terms: Vec<f64> = values.iter().map(|&f| phi.psi_unchecked(m, f - m).max(0.0)).collect();
    finite(&format!("Φ-entropy under {}", phi.name()), weighted_sum(weights, &terms))
}

/// Φ-entropy of f over explicit nodes.
pub fn phi_entropy_nodes(phi: &PhiFunction, nodes: &Nodes, f: &ScalarField, plan_label: &str, monte_carlo: bool) -> Result<EntropyValue> {
    let mut values = nodes.eval(f, "phi_entropy")?;
    let clamped = guard_values(phi, &mut values, &format!("{} at a node", f.name()))?;
    let value = entropy_of_values(phi, nodes.weights(), &values)?;
    let std_error = monte_carlo.then(|| {
        let m = weighted_sum(nodes.weights(), &values);
        let d1 = phi.d1(m);
        let infl: Vec<f64> = values.iter().map(|&v| phi.eval(v) - d1 * v).collect();
        standard_error(&infl)
    });
    Ok(EntropyValue {
        value,
        clamped,
        plan: plan_label.to_string(),
        std_error,
    })
}

/// Ent_μ^Φ(f) = E_μΦ(f) − Φ(E_μ f).
pub fn phi_entropy(phi: &PhiFunction, mu: &Measure, f: &ScalarField, plan: &ExpectationPlan) -> Result<EntropyValue> {
    let nodes = mu.discretize(plan)?;
    phi_entropy_nodes(phi, &nodes, f, &plan.to_string(), plan.is_monte_carlo())
}

/// Var_μ^Φ(f) = E_μ Φ(f − E_μ f); needs I = ℝ.
pub fn phi_variance(phi: &PhiFunction, mu: &Measure, f: &ScalarField, plan: &ExpectationPlan) -> Result<f64> {
    if !phi.interval().is_real_line() {
        return Err(Error::Incompatible(format!(
            "Φ-variance needs Φ defined on the whole line; {} lives on {}",
            phi.name(),
            phi.interval()
        )));
    }
    let nodes = mu.discretize(plan)?;
    let values = nodes.eval(f, "phi_variance")?;
    let m = nodes.integrate(&values);
    let centered: Vec<f64> = values.iter().map(|v| phi.eval(v - m)).collect();
    finite("Φ-variance", nodes.integrate(&centered))
}

/// ∫Φ̂(dν/dμ)dμ for two finitely supported laws; +∞ when ν ⊄ supp μ.
pub fn relative_phi_entropy(phi: &PhiFunction, nu: &Measure, mu: &Measure) -> Result<f64> {
    let (Measure::Atoms(nu), Measure::Atoms(mu)) = (nu, mu) else {
        return Err(Error::Incompatible(
            "relative Φ-entropy between general measures needs an explicit density".into(),
        ));
    };
    if nu.dim() != mu.dim() {
        return Err(invalid("relative Φ-entropy: dimensions differ"));
    }
    let key = |p: &[f64]| p.iter().map(|x| (x + 0.0).to_bits()).collect::<Vec<u64>>();
    let mut mu_mass: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut order = Vec::new();
    for i in 0..mu.len() {
        let k = key(mu.point(i));
        if !mu_mass.contains_key(&k) {
            order.push(k.clone());
        }
        *mu_mass.entry(k).or_insert(0.0) += mu.weights()[i];
    }
    let mut nu_mass: HashMap<Vec<u64>, f64> = HashMap::new();
    for i in 0..nu.len() {
        let w = nu.weights()[i];
        if w == 0.0 {
            continue;
        }
        let k = key(nu.point(i));
        match mu_mass.get(&k) {
            Some(m) if *m > 0.0 => *nu_mass.entry(k).or_insert(0.0) += w,
            _ => return Ok(f64::INFINITY),
        }
    }
    let mut weights = Vec::new();
    let mut terms = Vec::new();
    for k in &order {
        let m = mu_mass[k];
        if m == 0.0 {
            continue;
        }
        let mut density = [nu_mass.get(k).copied().unwrap_or(0.0) / m];
        guard_values(phi, &mut density, "dν/dμ")?;
        weights.push(m);
        terms.push(phi.phi_hat_unchecked(density[0]));
    }
    finite("relative Φ-entropy", weighted_sum(&weights, &terms))
}

/// ∫Φ̂(g)dμ for a density g = dν/dμ given as a field.
pub fn relative_phi_entropy_density(
    phi: &PhiFunction,
    density: &ScalarField,
    mu: &Measure,
    plan: &ExpectationPlan,
) -> Result<f64> {
    let nodes = mu.discretize(plan)?;
    let mut g = nodes.eval(density, "density")?;
    guard_values(phi, &mut g, "dν/dμ")?;
    let terms: Vec<f64> = g.iter().map(|v| phi.phi_hat_unchecked(*v)).collect();
    finite("relative Φ-entropy", nodes.integrate(&terms))
}

fn check_pairing(mu: &Measure, form: &EnergyForm) -> Result<()> {
    form.validate()?;
    let (gauss, poisson, _) = mu.leaf_profile();
    let ok = if form.is_diffusive() {
        gauss > 0 && !poisson
    } else {
        gauss == 0
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Incompatible(format!(
            "{} form cannot be paired with {}",
            form.name(),
            mu.describe()
        )))
    }
}

/// Pointwise energy integrand of `form` at each node.
pub(crate) fn energy_integrand(phi: &PhiFunction, nodes: &Nodes, f: &ScalarField, form: &EnergyForm) -> Result<Vec<f64>> {
    let d = nodes.dim();
    let mut values = nodes.eval(f, "energy")?;
    guard_values(phi, &mut values, f.name())?;
    let out: Vec<Result<f64>> = match form {
        EnergyForm::Diffusion => (0..nodes.len())
            .map(|i| Ok(phi.d2(values[i]) * f.grad_norm_sq(nodes.point(i))))
            .collect(),
        EnergyForm::Covariance { s } => {
            if s.len() != d * d {
                return Err(invalid("covariance form: S does not match the dimension"));
            }
            (0..nodes.len())
                .map(|i| {
                    let g = f.gradient(nodes.point(i));
                    let mut q = 0.0;
                    for a in 0..d {
                        for b in 0..d {
                            q += s[a * d + b] * g[a] * g[b];
                        }
                    }
                    Ok(phi.d2(values[i]) * q)
                })
                .collect()
        }
        EnergyForm::MultiTime { times } => {
            if times.len() != d {
                return Err(invalid("multi-time form: one time per coordinate"));
            }
            (0..nodes.len())
                .map(|i| {
                    let g = f.gradient(nodes.point(i));
                    Ok(phi.d2(values[i]) * multitime_quadratic(times, &g))
                })
                .collect()
        }
        EnergyForm::Jump { nu, rate } | EnergyForm::L1Fisher { nu, rate } => {
            if nu.dim() != d {
                return Err(invalid("jump form: jump measure dimension differs"));
            }
            let l1 = matches!(form, EnergyForm::L1Fisher { .. });
            let iv = phi.interval();
            (0..nodes.len())
                .map(|i| {
                    let x = nodes.point(i);
                    let u = values[i];
                    let mut shifted = vec![0.0; d];
                    let mut terms = Vec::with_capacity(nu.len());
                    for j in 0..nu.len() {
                        for (k, s) in shifted.iter_mut().enumerate() {
                            *s = x[k] + nu.point(j)[k];
                        }
                        let mut w = [f.eval(&shifted)];
                        finite(f.name(), w[0])?;
                        if !iv.contains(w[0]) {
                            guard_values(phi, &mut w, "shifted value")?;
                        }
                        let v = w[0] - u;
                        terms.push(if l1 { v * v / u } else { phi.psi_unchecked(u, v) });
                    }
                    let integral = weighted_sum(nu.weights(), &terms);
                    Ok(if l1 { 0.5 * rate * integral } else { rate * integral })
                })
                .collect()
        }
    };
    out.into_iter().collect()
}

/// E_μ of the energy integrand: the Φ-Fisher information surrogate for
/// diffusive forms, rate·E∫Ψ(f, D_y f)dν for jump forms.
pub fn phi_fisher(
    phi: &PhiFunction,
    mu: &Measure,
    f: &ScalarField,
    form: &EnergyForm,
    plan: &ExpectationPlan,
) -> Result<f64> {
    check_pairing(mu, form)?;
    let nodes = mu.discretize(plan)?;
    let integrand = energy_integrand(phi, &nodes, f, form)?;
    finite("Φ-Fisher information", nodes.integrate(&integrand))
}

/// −E_μ(Φ'(f)·L f) for the Poisson generator L f = rate·D₁f. This is the
/// Fisher information when μ is invariant for the jumps (counting measure
/// on ℤ, represented by uniform atoms on a window).
pub fn generator_fisher(
    phi: &PhiFunction,
    mu: &Measure,
    f: &ScalarField,
    rate: f64,
    plan: &ExpectationPlan,
) -> Result<f64> {
    if mu.dim() != 1 {
        return Err(invalid("generator Fisher information is one-dimensional"));
    }
    let nodes = mu.discretize(plan)?;
    let mut values = nodes.eval(f, "fisher")?;
    guard_values(phi, &mut values, f.name())?;
    let terms: Vec<f64> = (0..nodes.len())
        .map(|i| {
            let x = nodes.point(i)[0];
            -phi.d1(values[i]) * rate * (f.eval(&[x + 1.0]) - values[i])
        })
        .collect();
    finite("Φ-Fisher information", nodes.integrate(&terms))
}

/// E_μ((Φ'(h) − Φ'(E_μh))(f − h)) + Ent_μ^Φ(h), a lower bound on Ent_μ^Φ(f).
pub fn duality_lower_bound(
    phi: &PhiFunction,
    mu: &Measure,
    f: &ScalarField,
    h: &ScalarField,
    plan: &ExpectationPlan,
) -> Result<f64> {
    let nodes = mu.discretize(plan)?;
    let mut fv = nodes.eval(f, "duality f")?;
    let mut hv = nodes.eval(h, "duality h")?;
    guard_values(phi, &mut fv, f.name())?;
    guard_values(phi, &mut hv, h.name())?;
    let mh = nodes.integrate(&hv);
    let d1m = phi.d1(mh);
    let terms: Vec<f64> = fv
        .iter()
        .zip(&hv)
        .map(|(fi, hi)| (phi.d1(*hi) - d1m) * (fi - hi))
        .collect();
    let ent_h = entropy_of_values(phi, nodes.weights(), &hv)?;
    finite("duality bracket", nodes.integrate(&terms) + ent_h)
}

#[derive(Clone, Debug, Serialize)]
pub struct VariationalScan {
    pub min_value: f64,
    pub argmin: f64,
    pub values: Vec<(f64, f64)>,
}

/// a ↦ E_μ(Φ(f) − Φ(a) − Φ'(a)(f − a)) over the grid; each value bounds Ent from above.
pub fn variational_upper_scan(
    phi: &PhiFunction,
    mu: &Measure,
    f: &ScalarField,
    a_grid: &[f64],
    plan: &ExpectationPlan,
) -> Result<VariationalScan> {
    if a_grid.is_empty() {
        return Err(invalid("variational scan: empty grid"));
    }
    let nodes = mu.discretize(plan)?;
    let mut fv = nodes.eval(f, "variational f")?;
    guard_values(phi, &mut fv, f.name())?;
    let mut values = Vec::with_capacity(a_grid.len());
    for &a in a_grid {
        if !phi.interval().contains_interior(a) && !phi.interval().is_real_line() {
            return Err(Error::Domain {
                what: "a".into(),
                value: a,
                interval: phi.interval().to_string(),
            });
        }
        let terms: Vec<f64> = fv.iter().map(|x| phi.psi_unchecked(a, x - a)).collect();
        values.push((a, finite("variational value", nodes.integrate(&terms))?));
    }
    let (argmin, min_value) = values
        .iter()
        .cloned()
        .fold((f64::NAN, f64::INFINITY), |best, (a, v)| if v < best.1 { (a, v) } else { best });
    Ok(VariationalScan {
        min_value,
        argmin,
        values,
    })
}

/// a ↦ E_μ(f² log(f²/a) − f² + a), whose infimum over a > 0 is Ent_μ(f²).
pub fn square_entropy_scan(mu: &Measure, f: &ScalarField, a_grid: &[f64], plan: &ExpectationPlan) -> Result<VariationalScan> {
    let f2 = {
        let inner = f.clone();
        ScalarField::new(format!("({})^2", f.name()), f.arity(), move |x| inner.eval(x).powi(2))
    };
    variational_upper_scan(&PhiFunction::xlogx(), mu, &f2, a_grid, plan)
}

#[derive(Clone, Debug, Serialize)]
pub struct Decomposition {
    pub total: f64,
    pub expected_conditional: f64,
    pub of_conditional_mean: f64,
    pub skipped_slices: usize,
}

/// Ent(f) = E Ent(f | Y) + Ent(E(f | Y)) on a finite joint law, where Y is
/// the tuple of coordinates listed in `y_coords`.
pub fn conditional_decompose(phi: &PhiFunction, joint: &Atoms, y_coords: &[usize], f: &ScalarField) -> Result<Decomposition> {
    if y_coords.iter().any(|&c| c >= joint.dim()) {
        return Err(invalid("conditioning coordinate out of range"));
    }
    let nodes = Nodes::new(joint.dim(), joint.points().to_vec(), joint.weights().to_vec())?;
    let mut values = nodes.eval(f, "conditional f")?;
    guard_values(phi, &mut values, f.name())?;
    let total = entropy_of_values(phi, joint.weights(), &values)?;

    let mut slices: Vec<Vec<usize>> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    for i in 0..joint.len() {
        let key: Vec<u64> = y_coords.iter().map(|&c| (joint.point(i)[c] + 0.0).to_bits()).collect();
        let slot = *index.entry(key).or_insert_with(|| {
            slices.push(Vec::new());
            slices.len() - 1
        });
        slices[slot].push(i);
    }
    let mut masses = Vec::new();
    let mut cond_ent = Vec::new();
    let mut cond_mean = Vec::new();
    let mut skipped = 0;
    for slice in &slices {
        let w: Vec<f64> = slice.iter().map(|&i| joint.weights()[i]).collect();
        let mass = pairwise_sum(&w);
        if mass == 0.0 {
            skipped += 1;
            continue;
        }
        let w: Vec<f64> = w.iter().map(|x| x / mass).collect();
        let v: Vec<f64> = slice.iter().map(|&i| values[i]).collect();
        masses.push(mass);
        cond_ent.push(entropy_of_values(phi, &w, &v)?);
        cond_mean.push(weighted_sum(&w, &v));
    }
    Ok(Decomposition {
        total,
        expected_conditional: weighted_sum(&masses, &cond_ent),
        of_conditional_mean: entropy_of_values(phi, &masses, &cond_mean)?,
        skipped_slices: skipped,
    })
}

fn zero_normalized(phi: &PhiFunction) -> Result<PhiFunction> {
    phi.normalized_at_zero()
}

/// H^Φ(p) = −Σ Φ̂(pᵢ), with Φ shifted so that Φ(0) = 0.
pub fn shannon_phi_entropy(phi: &PhiFunction, weights: &[f64]) -> Result<f64> {
    if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(invalid("Shannon Φ-entropy: weights must be non-negative"));
    }
    let total = pairwise_sum(weights);
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("Shannon Φ-entropy: weights sum to {total}")));
    }
    let phi0 = zero_normalized(phi)?;
    let terms: Vec<f64> = weights.iter().map(|p| phi0.phi_hat_unchecked(*p)).collect();
    finite("Shannon Φ-entropy", -pairwise_sum(&terms))
}

/// H^Φ(f) = −∫Φ̂(f)dx as a Riemann sum over grid values with cell volume `vol`.
pub fn shannon_phi_entropy_cont(phi: &PhiFunction, density: &[f64], vol: f64) -> Result<f64> {
    if !(vol > 0.0) {
        return Err(invalid("cell volume must be positive"));
    }
    let phi0 = zero_normalized(phi)?;
    let mut d = density.to_vec();
    guard_values(&phi0, &mut d, "density")?;
    let terms: Vec<f64> = d.iter().map(|p| phi0.phi_hat_unchecked(*p)).collect();
    finite("Shannon Φ-entropy", -vol * pairwise_sum(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GH: ExpectationPlan = ExpectationPlan::GH_DEFAULT;

    fn two_atoms() -> Measure {
        Measure::atoms(&[0.0, 1.0], &[0.5, 0.5]).unwrap()
    }

    #[test]
    fn square_entropy_is_variance() {
        let mu = Measure::atoms(&[-1.0, 0.5, 3.0], &[0.2, 0.5, 0.3]).unwrap();
        let f = ScalarField::univariate("x^3", |x| x.powi(3), |x| 3.0 * x * x);
        let ent = phi_entropy(&PhiFunction::square(), &mu, &f, &ExpectationPlan::ExactAtoms).unwrap();
        let xs: [f64; 3] = [-1.0, 0.125, 27.0];
        let w = [0.2, 0.5, 0.3];
        let m: f64 = xs.iter().zip(&w).map(|(x, w)| x * w).sum();
        let var: f64 = xs.iter().zip(&w).map(|(x, w)| w * (x - m).powi(2)).sum();
        assert!((ent.value - var).abs() < 1e-12);
        assert!(!ent.clamped);
    }

    #[test]
    fn constant_has_zero_entropy() {
        let f = ScalarField::constant(1, 2.5);
        for phi in [PhiFunction::xlogx(), PhiFunction::square(), PhiFunction::power(1.5).unwrap()] {
            let e = phi_entropy(&phi, &Measure::standard_normal(), &f, &GH).unwrap();
            assert_eq!(e.value, 0.0);
        }
    }

    #[test]
    fn gaussian_exponential_entropy() {
        let theta: f64 = 0.5;
        let f = ScalarField::exponential(&[theta], -theta * theta / 2.0);
        let e = phi_entropy(&PhiFunction::xlogx(), &Measure::standard_normal(), &f, &GH).unwrap();
        assert!((e.value - 0.125).abs() < 1e-12);
    }

    #[test]
    fn phi_variance_examples() {
        let mu = Measure::atoms(&[0.0, 1.0, 5.0], &[0.3, 0.3, 0.4]).unwrap();
        let f = ScalarField::coordinate(1, 0);
        let plan = ExpectationPlan::ExactAtoms;
        let v = phi_variance(&PhiFunction::square(), &mu, &f, &plan).unwrap();
        let ent = phi_entropy(&PhiFunction::square(), &mu, &f, &plan).unwrap().value;
        assert!((v - ent).abs() < 1e-12);
        let shifted = phi_variance(&PhiFunction::square(), &mu, &f.shifted(10.0), &plan).unwrap();
        assert!((shifted - v).abs() < 1e-12);
        let q = phi_variance(&PhiFunction::quadratic(1.0, 5.0, 7.0).unwrap(), &mu, &f, &plan).unwrap();
        assert!((q - (v + 7.0)).abs() < 1e-12);
        assert!(phi_variance(&PhiFunction::xlogx(), &mu, &f, &plan).is_err());
    }

    #[test]
    fn relative_entropy_examples() {
        let phi = PhiFunction::xlogx();
        let mu = two_atoms();
        assert_eq!(relative_phi_entropy(&phi, &mu, &mu).unwrap(), 0.0);
        let nu = Measure::atoms(&[0.0, 1.0], &[0.7, 0.3]).unwrap();
        let kl = 0.7 * 1.4f64.ln() + 0.3 * 0.6f64.ln();
        assert!((relative_phi_entropy(&phi, &nu, &mu).unwrap() - kl).abs() < 1e-14);
        assert!((kl - 0.08228).abs() < 1e-5);
        let outside = Measure::atoms(&[0.0, 2.0], &[0.5, 0.5]).unwrap();
        assert_eq!(relative_phi_entropy(&phi, &outside, &mu).unwrap(), f64::INFINITY);
        let density = ScalarField::tabulated(&[1.4, 0.6]);
        let via_density = relative_phi_entropy_density(&phi, &density, &mu, &ExpectationPlan::ExactAtoms).unwrap();
        assert!((via_density - kl).abs() < 1e-14);
    }

    #[test]
    fn fisher_examples() {
        let sq = PhiFunction::square();
        let x = ScalarField::coordinate(1, 0);
        let d = phi_fisher(&sq, &Measure::standard_normal(), &x, &EnergyForm::Diffusion, &GH).unwrap();
        assert!((d - 2.0).abs() < 1e-12);

        let jump = EnergyForm::Jump {
            nu: Atoms::dirac(&[1.0]),
            rate: 1.0,
        };
        let pois = Measure::poisson(1.0).unwrap();
        let j = phi_fisher(&sq, &pois, &x, &jump, &ExpectationPlan::POISSON_DEFAULT).unwrap();
        assert!((j - 1.0).abs() < 1e-12);

        let l1 = EnergyForm::L1Fisher {
            nu: Atoms::dirac(&[1.0]),
            rate: 1.0,
        };
        let c = ScalarField::constant(1, 3.0);
        assert_eq!(
            phi_fisher(&PhiFunction::xlogx(), &pois, &c, &l1, &ExpectationPlan::POISSON_DEFAULT).unwrap(),
            0.0
        );
        assert!(phi_fisher(&sq, &pois, &x, &EnergyForm::Diffusion, &ExpectationPlan::POISSON_DEFAULT).is_err());
        assert!(phi_fisher(&sq, &Measure::standard_normal(), &x, &jump, &GH).is_err());
    }

    #[test]
    fn generator_fisher_matches_jump_form_for_square() {
        // Under counting measure, −Σ 2f·λD₁f = λΣ(D₁f)² for summable f.
        let window: Vec<f64> = (-40..=40).map(f64::from).collect();
        let mu = Measure::Atoms(Atoms::uniform(1, window).unwrap());
        let f = ScalarField::univariate("gauss", |x| (-x * x / 4.0).exp(), |x| -x / 2.0 * (-x * x / 4.0).exp());
        let plan = ExpectationPlan::ExactAtoms;
        let g = generator_fisher(&PhiFunction::square(), &mu, &f, 2.0, &plan).unwrap();
        let jump = EnergyForm::Jump {
            nu: Atoms::dirac(&[1.0]),
            rate: 2.0,
        };
        let j = phi_fisher(&PhiFunction::square(), &mu, &f, &jump, &plan).unwrap();
        assert!((g - j).abs() < 1e-14, "{g} vs {j}");
    }

    #[test]
    fn duality_examples() {
        let mu = Measure::atoms(&[0.0, 1.0, 2.0], &[0.2, 0.5, 0.3]).unwrap();
        let plan = ExpectationPlan::ExactAtoms;
        let f = ScalarField::tabulated(&[0.5, 2.0, 1.2]);
        let h = ScalarField::tabulated(&[1.0, 1.5, 0.7]);
        for phi in [PhiFunction::xlogx(), PhiFunction::square()] {
            let ent = phi_entropy(&phi, &mu, &f, &plan).unwrap().value;
            let at_f = duality_lower_bound(&phi, &mu, &f, &f, &plan).unwrap();
            assert!((at_f - ent).abs() < 1e-14);
            let other = duality_lower_bound(&phi, &mu, &f, &h, &plan).unwrap();
            assert!(other <= ent + 1e-12);
            let mean = mu.expect(&f, &plan).unwrap();
            let flat = duality_lower_bound(&phi, &mu, &f, &ScalarField::constant(1, mean), &plan).unwrap();
            assert!(flat.abs() < 1e-14);
        }
        // Φ = x²: the bracket is 2Cov(f, h) − Var(h).
        let sq = PhiFunction::square();
        let cov = {
            let fh = ScalarField::tabulated(&[0.5, 3.0, 0.84]);
            mu.expect(&fh, &plan).unwrap() - mu.expect(&f, &plan).unwrap() * mu.expect(&h, &plan).unwrap()
        };
        let var_h = phi_entropy(&sq, &mu, &h, &plan).unwrap().value;
        let d = duality_lower_bound(&sq, &mu, &f, &h, &plan).unwrap();
        assert!((d - (2.0 * cov - var_h)).abs() < 1e-12);
    }

    #[test]
    fn variational_scan() {
        let mu = Measure::atoms(&[0.0, 1.0, 2.0], &[0.2, 0.5, 0.3]).unwrap();
        let plan = ExpectationPlan::ExactAtoms;
        let f = ScalarField::tabulated(&[0.5, 2.0, 1.2]);
        let mean = mu.expect(&f, &plan).unwrap();
        for phi in [PhiFunction::xlogx(), PhiFunction::square()] {
            let ent = phi_entropy(&phi, &mu, &f, &plan).unwrap().value;
            let grid: Vec<f64> = (1..=400).map(|i| i as f64 * 0.0075).chain([mean]).collect();
            let scan = variational_upper_scan(&phi, &mu, &f, &grid, &plan).unwrap();
            assert!(scan.values.iter().all(|(_, v)| *v >= ent - 1e-12));
            assert!((scan.min_value - ent).abs() < 1e-12);
            assert_eq!(scan.argmin, mean);
        }
        assert!(variational_upper_scan(&PhiFunction::square(), &mu, &f, &[], &plan).is_err());
    }

    #[test]
    fn square_form_recovers_entropy_of_square() {
        let mu = Measure::standard_normal();
        let f = ScalarField::univariate("1+x^2/4", |x| 1.0 + 0.25 * x * x, |x| 0.5 * x);
        let f2 = ScalarField::univariate("(1+x^2/4)^2", |x| (1.0 + 0.25 * x * x).powi(2), |x| x * (1.0 + 0.25 * x * x));
        let target = phi_entropy(&PhiFunction::xlogx(), &mu, &f2, &GH).unwrap().value;
        let ef2 = mu.expect(&f2, &GH).unwrap();
        let grid: Vec<f64> = (1..=200).map(|i| i as f64 * 0.02).chain([ef2]).collect();
        let scan = square_entropy_scan(&mu, &f, &grid, &GH).unwrap();
        assert!((scan.min_value - target).abs() < 1e-10);
        assert!((scan.argmin - ef2).abs() < 1e-12);

        // Read literally with the sign pattern "− a + f²", the integrand
        // f² log(f²/a) − a + f² decreases without bound as a grows.
        let literal = |a: f64| {
            let g = ScalarField::univariate("lit", move |x| {
                let s = (1.0 + 0.25 * x * x).powi(2);
                s * (s / a).ln() - a + s
            }, |_| 0.0);
            mu.expect(&g, &GH).unwrap()
        };
        assert!(literal(10.0) < literal(1.0) && literal(1000.0) < -900.0);
    }

    #[test]
    fn decomposition_degenerate_cases() {
        let phi = PhiFunction::xlogx();
        // f depends on X only, X independent of Y.
        let joint = Atoms::new(
            2,
            vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0],
            vec![0.12, 0.28, 0.18, 0.42],
        )
        .unwrap();
        let fx = ScalarField::new("1+x", 2, |p| 1.0 + p[0]);
        let d = conditional_decompose(&phi, &joint, &[1], &fx).unwrap();
        assert!(d.of_conditional_mean.abs() < 1e-15);
        assert!((d.expected_conditional - d.total).abs() < 1e-14);
        // f depends on Y only.
        let fy = ScalarField::new("1+y", 2, |p| 1.0 + 3.0 * p[1]);
        let d = conditional_decompose(&phi, &joint, &[1], &fy).unwrap();
        assert!(d.expected_conditional.abs() < 1e-15);
        assert!((d.of_conditional_mean - d.total).abs() < 1e-14);
    }

    #[test]
    fn decomposition_skips_empty_slices() {
        let joint = Atoms::new(2, vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0], vec![0.5, 0.5, 0.0]).unwrap();
        let f = ScalarField::new("1+x", 2, |p| 1.0 + p[0]);
        let d = conditional_decompose(&PhiFunction::square(), &joint, &[1], &f).unwrap();
        assert_eq!(d.skipped_slices, 1);
        assert!((d.total - d.of_conditional_mean - d.expected_conditional).abs() < 1e-15);
    }

    #[test]
    fn shannon_examples() {
        let phi = PhiFunction::xlogx();
        let h = shannon_phi_entropy(&phi, &[0.25, 0.75]).unwrap();
        assert!((h - 0.562335).abs() < 1e-6);
        let n = 7;
        let u = vec![1.0 / n as f64; n];
        let expected = -(n as f64) * phi.phi_hat(1.0 / n as f64).unwrap();
        assert!((shannon_phi_entropy(&phi, &u).unwrap() - expected).abs() < 1e-14);
        for phi in [PhiFunction::xlogx(), PhiFunction::square(), PhiFunction::quadratic(1.0, 2.0, 3.0).unwrap()] {
            assert!(shannon_phi_entropy(&phi, &[0.0, 1.0, 0.0]).unwrap().abs() < 1e-15);
        }
        assert!(shannon_phi_entropy(&phi, &[-0.1, 1.1]).is_err());
    }

    #[test]
    fn entropy_is_nonnegative_even_for_tiny_spreads() {
        let mu = Measure::atoms(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        let f = ScalarField::tabulated(&[1e6, 1e6 + 1e-6]);
        let e = phi_entropy(&PhiFunction::xlogx(), &mu, &f, &ExpectationPlan::ExactAtoms).unwrap();
        assert!(e.value >= 0.0);
    }

    #[test]
    fn clamping_and_domain_errors() {
        let mu = two_atoms();
        let plan = ExpectationPlan::ExactAtoms;
        let f = ScalarField::tabulated(&[-1e-11, 2.0]);
        let e = phi_entropy(&PhiFunction::xlogx(), &mu, &f, &plan).unwrap();
        assert!(e.clamped);
        let bad = ScalarField::tabulated(&[-0.5, 2.0]);
        assert!(matches!(
            phi_entropy(&PhiFunction::xlogx(), &mu, &bad, &plan),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn monte_carlo_entropy_has_error_bar() {
        let f = ScalarField::exponential(&[0.5], -0.125);
        let plan = ExpectationPlan::MonteCarlo { n: 100_000, seed: 1 };
        let e = phi_entropy(&PhiFunction::xlogx(), &Measure::standard_normal(), &f, &plan).unwrap();
        let se = e.std_error.unwrap();
        assert!(se > 0.0 && (e.value - 0.125).abs() < 4.0 * se);
    }
}
