//! Exact Markov semigroups: Ornstein–Uhlenbeck (Mehler form), heat, and
//! the simple Poisson process on ℤ, with de Bruijn checks and decay traces.
//!
//! Normalizations: OU has generator Δ − ρx·∇, Γf = |∇f|², invariant law
//! N(0, I/ρ) and P_t f(x) = E f(e^{−ρt}x + √((1 − e^{−2ρt})/ρ) Z). Heat has
//! P_t f(x) = E f(x + √(2t) Z). Poisson has P_t f(x) = E f(x + N_{λt}).

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{finite, invalid, Error, Result};
use crate::field::{ScalarField, VectorMap};
use crate::functionals::{entropy_of_values, guard_values, phi_entropy, EntropyValue};
use crate::measure::{hermite_rule, poisson_truncation, poisson_weights, ExpectationPlan, Gaussian, Measure, Nodes};
use crate::numeric::{linear_fit, weighted_sum};
use crate::phi::{certify, Hypothesis, PhiFunction};
use crate::report::DeficitReport;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Semigroup {
    Ou { rho: f64 },
    Heat { dim: usize },
    Poisson { rate: f64 },
}

/// Entropies below this are treated as zero when fitting decay rates.
pub const ENTROPY_FLOOR: f64 = 1e-13;

impl Semigroup {
    pub fn validate(&self) -> Result<()> {
        match self {
            Semigroup::Ou { rho } if !(*rho > 0.0) || !rho.is_finite() => {
                Err(invalid(format!("OU curvature ρ = {rho} must be positive")))
            }
            Semigroup::Heat { dim } if *dim == 0 => Err(invalid("heat semigroup needs dim ≥ 1")),
            Semigroup::Poisson { rate } if !(*rate > 0.0) || !rate.is_finite() => {
                Err(invalid(format!("Poisson rate {rate} must be positive")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Semigroup::Ou { rho } => format!("OU(ρ={rho})"),
            Semigroup::Heat { dim } => format!("heat(d={dim})"),
            Semigroup::Poisson { rate } => format!("Poisson(λ={rate})"),
        }
    }

    /// Constant of the local inequality at time t.
    pub fn local_constant(&self, t: f64) -> f64 {
        match self {
            Semigroup::Ou { rho } => -(-2.0 * rho * t).exp_m1() / (2.0 * rho),
            Semigroup::Heat { .. } => t,
            Semigroup::Poisson { rate } => rate * t,
        }
    }

    /// Invariant probability measure in dimension d, when there is one.
    pub fn invariant(&self, d: usize) -> Option<Measure> {
        match self {
            Semigroup::Ou { rho } => {
                let mut cov = vec![0.0; d * d];
                for i in 0..d {
                    cov[i * d + i] = 1.0 / rho;
                }
                Some(Measure::Gaussian(Gaussian::new(vec![0.0; d], cov).ok()?))
            }
            _ => None,
        }
    }

    /// Law of X_t started at x.
    pub fn kernel(&self, t: f64, x: &[f64]) -> Result<Measure> {
        self.validate()?;
        let d = x.len();
        let diag = |mean: Vec<f64>, var: f64| {
            let mut cov = vec![0.0; d * d];
            for i in 0..d {
                cov[i * d + i] = var;
            }
            Gaussian::new(mean, cov).map(Measure::Gaussian)
        };
        match self {
            Semigroup::Ou { rho } => {
                let a = (-rho * t).exp();
                let var = -(-2.0 * rho * t).exp_m1() / rho;
                diag(x.iter().map(|xi| a * xi).collect(), var)
            }
            Semigroup::Heat { .. } => diag(x.to_vec(), 2.0 * t),
            Semigroup::Poisson { rate } => {
                if d != 1 {
                    return Err(invalid("the Poisson semigroup acts on functions of one integer variable"));
                }
                let shift = x[0];
                Measure::pushforward(
                    VectorMap::new(format!("+{shift}"), 1, 1, move |k| vec![k[0] + shift]),
                    Measure::poisson(rate * t)?,
                )
            }
        }
    }

    fn inner_plan(&self, plan: &ExpectationPlan) -> Result<ExpectationPlan> {
        let ok = matches!(
            (self, plan),
            (Semigroup::Ou { .. } | Semigroup::Heat { .. }, ExpectationPlan::GaussHermite { .. })
                | (Semigroup::Poisson { .. }, ExpectationPlan::PoissonSum { .. })
        );
        if ok {
            Ok(plan.clone())
        } else {
            Err(Error::PlanMismatch {
                plan: plan.to_string(),
                measure: format!("kernel of {}", self.name()),
            })
        }
    }

    /// Default inner plan for [`Semigroup::apply`].
    pub fn default_plan(&self) -> ExpectationPlan {
        match self {
            Semigroup::Poisson { .. } => ExpectationPlan::POISSON_DEFAULT,
            _ => ExpectationPlan::GH_DEFAULT,
        }
    }

    /// The field x ↦ P_t f(x), by Gauss–Hermite (OU, heat) or truncated
    /// Poisson sums. P_0 f = f.
    pub fn apply(&self, t: f64, f: &ScalarField, plan: &ExpectationPlan) -> Result<ScalarField> {
        self.validate()?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(invalid(format!("time {t} must be non-negative")));
        }
        let plan = self.inner_plan(plan)?;
        if t == 0.0 {
            return Ok(f.clone());
        }
        let d = f.arity();
        let name = format!("P_{t}[{}]", f.name());
        match (self, &plan) {
            (Semigroup::Poisson { rate }, ExpectationPlan::PoissonSum { tail_tol }) => {
                if d != 1 {
                    return Err(invalid("the Poisson semigroup acts on functions of one integer variable"));
                }
                let mean = rate * t;
                let k = poisson_truncation(mean, *tail_tol);
                let pmf = poisson_weights(mean, k);
                let pmf = Arc::new(pmf);
                let (g, pmf2) = (f.clone(), pmf.clone());
                let mut out = ScalarField::new(name, 1, move |x| {
                    let vals: Vec<f64> = (0..pmf.len()).map(|j| g.eval(&[x[0] + j as f64])).collect();
                    weighted_sum(&pmf, &vals)
                });
                if f.has_grad() {
                    let g = f.clone();
                    out = out.with_grad(move |x| {
                        let vals: Vec<f64> = (0..pmf2.len()).map(|j| g.gradient(&[x[0] + j as f64])[0]).collect();
                        vec![weighted_sum(&pmf2, &vals)]
                    });
                }
                Ok(out.with_codomain(f.codomain()))
            }
            (_, ExpectationPlan::GaussHermite { order }) => {
                if d > 3 {
                    return Err(invalid("Gauss–Hermite semigroup action is limited to d ≤ 3"));
                }
                let (a, s) = match self {
                    Semigroup::Ou { rho } => ((-rho * t).exp(), (-(-2.0 * rho * t).exp_m1() / rho).sqrt()),
                    _ => (1.0, (2.0 * t).sqrt()),
                };
                let rule = hermite_rule(*order);
                let n = order.pow(d as u32);
                let mut offsets = Vec::with_capacity(n * d);
                let mut weights = Vec::with_capacity(n);
                let mut idx = vec![0usize; d];
                for _ in 0..n {
                    let mut w = 1.0;
                    for &i in &idx {
                        offsets.push(s * rule[i].0);
                        w *= rule[i].1;
                    }
                    weights.push(w);
                    for k in (0..d).rev() {
                        idx[k] += 1;
                        if idx[k] < *order {
                            break;
                        }
                        idx[k] = 0;
                    }
                }
                let offsets = Arc::new(offsets);
                let weights = Arc::new(weights);
                let (g, o1, w1) = (f.clone(), offsets.clone(), weights.clone());
                let mut out = ScalarField::new(name, d, move |x| {
                    let mut y = vec![0.0; d];
                    let vals: Vec<f64> = (0..w1.len())
                        .map(|j| {
                            for k in 0..d {
                                y[k] = a * x[k] + o1[j * d + k];
                            }
                            g.eval(&y)
                        })
                        .collect();
                    weighted_sum(&w1, &vals)
                });
                if f.has_grad() {
                    let g = f.clone();
                    out = out.with_grad(move |x| {
                        let mut y = vec![0.0; d];
                        let mut acc = vec![0.0; d];
                        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(weights.len()); d];
                        for j in 0..weights.len() {
                            for k in 0..d {
                                y[k] = a * x[k] + offsets[j * d + k];
                            }
                            for (k, gk) in g.gradient(&y).into_iter().enumerate() {
                                cols[k].push(gk);
                            }
                        }
                        for k in 0..d {
                            acc[k] = a * weighted_sum(&weights, &cols[k]);
                        }
                        acc
                    });
                }
                Ok(out.with_codomain(f.codomain()))
            }
            _ => unreachable!("inner plan checked above"),
        }
    }
}

/// Free-function form of [`Semigroup::apply`].
pub fn apply(sg: &Semigroup, t: f64, f: &ScalarField, plan: &ExpectationPlan) -> Result<ScalarField> {
    sg.apply(t, f, plan)
}

/// Reference measure for entropy along a semigroup: the invariant law for
/// OU; Lebesgue measure on a window for heat, counting measure on a window
/// of ℤ for Poisson. The last two use Φ shifted so that Φ(0) = 0.
struct Reference {
    nodes: Nodes,
    phi: PhiFunction,
    probability: bool,
}

fn reference(sg: &Semigroup, phi: &PhiFunction, f: &ScalarField, t_max: f64, outer: &ExpectationPlan) -> Result<Reference> {
    match sg {
        Semigroup::Ou { .. } => {
            let mu = sg.invariant(f.arity()).expect("OU has an invariant law");
            Ok(Reference {
                nodes: mu.discretize(outer)?,
                phi: phi.clone(),
                probability: true,
            })
        }
        Semigroup::Heat { .. } => {
            if f.arity() != 1 {
                return Err(invalid("heat entropy checks run on the line"));
            }
            let half = 12.0 + 8.0 * (2.0 * t_max).sqrt();
            let n = 4001;
            let h = 2.0 * half / (n - 1) as f64;
            let points: Vec<f64> = (0..n).map(|i| -half + i as f64 * h).collect();
            let mut weights = vec![h; n];
            weights[0] *= 0.5;
            weights[n - 1] *= 0.5;
            Ok(Reference {
                nodes: Nodes::new(1, points, weights)?,
                phi: phi.normalized_at_zero()?,
                probability: false,
            })
        }
        Semigroup::Poisson { rate } => {
            if f.arity() != 1 {
                return Err(invalid("Poisson entropy checks run on ℤ"));
            }
            let low = poisson_truncation(rate * t_max, 1e-15) as i64 + 1;
            let high = 60i64;
            let points: Vec<f64> = (-low..=high).map(|k| k as f64).collect();
            let n = points.len();
            Ok(Reference {
                nodes: Nodes::new(1, points, vec![1.0; n])?,
                phi: phi.normalized_at_zero()?,
                probability: false,
            })
        }
    }
}

impl Reference {
    fn entropy(&self, g: &ScalarField) -> Result<(f64, bool)> {
        let mut v = self.nodes.eval(g, "entropy along the semigroup")?;
        let clamped = guard_values(&self.phi, &mut v, g.name())?;
        let value = if self.probability {
            entropy_of_values(&self.phi, self.nodes.weights(), &v)?
        } else {
            let terms: Vec<f64> = v.iter().map(|x| self.phi.eval(*x)).collect();
            weighted_sum(self.nodes.weights(), &terms)
        };
        Ok((finite("entropy along the semigroup", value)?, clamped))
    }

    /// −E(Φ''(g)|∇g|²) or Σ Φ'(g)·λD₁g.
    fn dissipation(&self, sg: &Semigroup, g: &ScalarField) -> Result<f64> {
        let mut v = self.nodes.eval(g, "dissipation")?;
        guard_values(&self.phi, &mut v, g.name())?;
        let terms: Vec<f64> = match sg {
            Semigroup::Poisson { rate } => (0..self.nodes.len())
                .map(|i| {
                    let x = self.nodes.point(i)[0];
                    let mut up = [g.eval(&[x + 1.0])];
                    let _ = guard_values(&self.phi, &mut up, g.name());
                    self.phi.d1(v[i]) * rate * (up[0] - v[i])
                })
                .collect(),
            _ => (0..self.nodes.len())
                .map(|i| -self.phi.d2(v[i]) * g.grad_norm_sq(self.nodes.point(i)))
                .collect(),
        };
        finite("dissipation", weighted_sum(self.nodes.weights(), &terms))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DeBruijnReport {
    pub semigroup: String,
    pub t: f64,
    pub step: f64,
    pub entropy: f64,
    pub fd_derivative: f64,
    pub predicted: f64,
    pub relative_error: f64,
    pub sign_ok: bool,
    pub cancellation: bool,
    pub pass: bool,
}

/// Central-difference time derivative of Ent(P_t f) against the
/// dissipation functional at time t.
pub fn debruijn_check(
    sg: &Semigroup,
    phi: &PhiFunction,
    f: &ScalarField,
    t: f64,
    inner: &ExpectationPlan,
    outer: &ExpectationPlan,
) -> Result<DeBruijnReport> {
    if !(t > 0.0) {
        return Err(invalid("de Bruijn check needs t > 0"));
    }
    let step = (1e-4 * t.max(1.0)).min(0.5 * t);
    let reference = reference(sg, phi, f, t + step, outer)?;
    let (e_plus, _) = reference.entropy(&sg.apply(t + step, f, inner)?)?;
    let (e_minus, _) = reference.entropy(&sg.apply(t - step, f, inner)?)?;
    let pt = sg.apply(t, f, inner)?;
    let (entropy, _) = reference.entropy(&pt)?;
    let fd = (e_plus - e_minus) / (2.0 * step);
    let predicted = reference.dissipation(sg, &pt)?;
    let gap = (fd - predicted).abs();
    let relative_error = if predicted == 0.0 { gap } else { gap / predicted.abs() };
    let scale = entropy.abs().max(e_plus.abs()).max(1.0);
    let cancellation = (e_plus - e_minus).abs() < 1e-10 * scale && predicted.abs() > 1e-10;
    Ok(DeBruijnReport {
        semigroup: sg.name(),
        t,
        step,
        entropy,
        fd_derivative: fd,
        predicted,
        relative_error,
        sign_ok: fd <= 1e-9 && predicted <= 1e-12,
        cancellation,
        pass: gap <= 1e-4 * predicted.abs() + 1e-10,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayTrace {
    pub semigroup: String,
    pub times: Vec<f64>,
    pub entropies: Vec<EntropyValue>,
    /// e^{−2ρt}·Ent(f), the exponential envelope of the Φ-Sobolev constant 1/(2ρ).
    pub envelope: Vec<f64>,
    pub fitted_rate: Option<f64>,
    pub points_used: usize,
    pub degenerate: bool,
    pub monotone: bool,
    pub under_envelope: bool,
}

impl DecayTrace {
    /// Columns t, entropy, envelope.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "entropy", "envelope"])?;
        for ((t, e), env) in self.times.iter().zip(&self.entropies).zip(&self.envelope) {
            w.write_record([t.to_string(), e.value.to_string(), env.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ent(P_t f) under the invariant law along the time grid, with the
/// least-squares slope of log Ent against t.
pub fn decay_rate(
    sg: &Semigroup,
    phi: &PhiFunction,
    f: &ScalarField,
    times: &[f64],
    inner: &ExpectationPlan,
    outer: &ExpectationPlan,
) -> Result<DecayTrace> {
    let Semigroup::Ou { rho } = sg else {
        return Err(Error::Incompatible(format!(
            "{} has no invariant probability measure to decay towards",
            sg.name()
        )));
    };
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times[0] < 0.0 {
        return Err(invalid("decay times must be non-negative and increasing"));
    }
    let mu = sg.invariant(f.arity()).expect("OU has an invariant law");
    let mut entropies = Vec::with_capacity(times.len());
    for &t in times {
        entropies.push(phi_entropy(phi, &mu, &sg.apply(t, f, inner)?, outer)?);
    }
    let ent0 = phi_entropy(phi, &mu, f, outer)?.value;
    let envelope: Vec<f64> = times.iter().map(|t| (-2.0 * rho * t).exp() * ent0).collect();
    let values: Vec<f64> = entropies.iter().map(|e| e.value).collect();
    let monotone = values.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    let under_envelope = values
        .iter()
        .zip(&envelope)
        .all(|(e, b)| *e <= b + 1e-9 + 1e-7 * b.abs());
    let keep = values.iter().take_while(|e| **e > ENTROPY_FLOOR).count();
    let (ts, logs): (Vec<f64>, Vec<f64>) = times[..keep]
        .iter()
        .zip(&values[..keep])
        .map(|(t, e)| (*t, e.ln()))
        .unzip();
    let fitted_rate = if keep >= 2 { linear_fit(&ts, &logs).map(|(slope, _)| slope) } else { None };
    Ok(DecayTrace {
        semigroup: sg.name(),
        times: times.to_vec(),
        entropies,
        envelope,
        fitted_rate,
        points_used: keep,
        degenerate: fitted_rate.is_none(),
        monotone,
        under_envelope,
    })
}

/// Ent_{P_t(x,·)}^Φ(f) ≤ c(t)·P_t(E(f))(x) at each probe, where E(f) is
/// Φ''(f)|∇f|² for OU and heat and Ψ(f, D₁f) for Poisson. Refuses when the
/// required hypothesis ((H1) or (H2)) fails on the default grid.
pub fn local_deficit(
    sg: &Semigroup,
    phi: &PhiFunction,
    f: &ScalarField,
    t: f64,
    probes: &[Vec<f64>],
    plan: &ExpectationPlan,
) -> Result<Vec<DeficitReport>> {
    if !(t > 0.0) {
        return Err(invalid("local inequality needs t > 0"));
    }
    let hyp = match sg {
        Semigroup::Poisson { .. } => Hypothesis::H2,
        _ => Hypothesis::H1,
    };
    certify(phi, hyp)?;
    let c = sg.local_constant(t);
    let mut out = Vec::with_capacity(probes.len());
    for x in probes {
        if x.len() != f.arity() {
            return Err(invalid("probe dimension differs from the field's arity"));
        }
        let kernel = sg.kernel(t, x)?;
        let nodes = kernel.discretize(plan)?;
        let mut v = nodes.eval(f, "local inequality")?;
        let clamped = guard_values(phi, &mut v, f.name())?;
        let lhs = entropy_of_values(phi, nodes.weights(), &v)?;
        let terms: Vec<f64> = match sg {
            Semigroup::Poisson { .. } => (0..nodes.len())
                .map(|i| {
                    let k = nodes.point(i)[0];
                    let mut up = [f.eval(&[k + 1.0])];
                    guard_values(phi, &mut up, f.name())?;
                    Ok(phi.psi_unchecked(v[i], up[0] - v[i]))
                })
                .collect::<Result<_>>()?,
            _ => (0..nodes.len())
                .map(|i| phi.d2(v[i]) * f.grad_norm_sq(nodes.point(i)))
                .collect(),
        };
        let rhs = finite("local energy", nodes.integrate(&terms))?;
        let mut r = DeficitReport::new(
            format!("local {} t={t} x={x:?}", sg.name()),
            lhs,
            rhs,
            c,
            f.name(),
            plan.to_string(),
        )
        .clamped(clamped);
        if let Semigroup::Heat { .. } = sg {
            r = r
                .with_detail("half_constant", t / 2.0)
                .with_detail("half_constant_deficit", t / 2.0 * rhs - lhs);
        }
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Atoms;

    fn kernel_atoms(sg: &Semigroup, t: f64, x: f64, plan: &ExpectationPlan) -> Result<Atoms> {
        let nodes = sg.kernel(t, &[x])?.discretize(plan)?;
        Atoms::normalized(1, nodes.points().to_vec(), nodes.weights().to_vec())
    }

    const GH: ExpectationPlan = ExpectationPlan::GH_DEFAULT;
    const PS: ExpectationPlan = ExpectationPlan::POISSON_DEFAULT;

    fn x() -> ScalarField {
        ScalarField::coordinate(1, 0)
    }

    #[test]
    fn action_on_linear_functions() {
        let ou = Semigroup::Ou { rho: 1.0 };
        let p = ou.apply(0.7, &x(), &GH).unwrap();
        for xv in [-2.0, 0.0, 1.5] {
            assert!((p.eval(&[xv]) - (-0.7f64).exp() * xv).abs() < 1e-12);
        }
        let pois = Semigroup::Poisson { rate: 2.0 };
        let p = pois.apply(1.5, &x(), &PS).unwrap();
        for xv in [-3.0, 0.0, 4.0] {
            assert!((p.eval(&[xv]) - (xv + 3.0)).abs() < 1e-10);
        }
        let f = ScalarField::univariate("sin", f64::sin, f64::cos);
        for sg in [ou, Semigroup::Heat { dim: 1 }] {
            let p0 = sg.apply(0.0, &f, &GH).unwrap();
            assert_eq!(p0.eval(&[0.3]), f.eval(&[0.3]));
        }
    }

    #[test]
    fn heat_on_quadratic() {
        let f = ScalarField::univariate("x^2", |x| x * x, |x| 2.0 * x);
        let p = Semigroup::Heat { dim: 1 }.apply(0.5, &f, &GH).unwrap();
        assert!((p.eval(&[1.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn semigroup_law() {
        let f = ScalarField::univariate("cos", f64::cos, |x| -x.sin());
        let ou = Semigroup::Ou { rho: 0.8 };
        let twice = ou.apply(0.3, &ou.apply(0.4, &f, &GH).unwrap(), &GH).unwrap();
        let once = ou.apply(0.7, &f, &GH).unwrap();
        for xv in [-1.0, 0.2, 2.5] {
            assert!((twice.eval(&[xv]) - once.eval(&[xv])).abs() < 1e-8);
        }
    }

    #[test]
    fn debruijn_ou_square_linear() {
        let ou = Semigroup::Ou { rho: 1.0 };
        let r = debruijn_check(&ou, &PhiFunction::square(), &x(), 0.5, &GH, &GH).unwrap();
        assert!((r.predicted + 2.0 * (-1.0f64).exp()).abs() < 1e-10);
        assert!(r.pass && r.sign_ok, "{r:?}");
    }

    #[test]
    fn debruijn_constant() {
        let c = ScalarField::constant(1, 2.0);
        let r = debruijn_check(&Semigroup::Ou { rho: 1.0 }, &PhiFunction::xlogx(), &c, 1.0, &GH, &GH).unwrap();
        assert_eq!(r.fd_derivative, 0.0);
        assert_eq!(r.predicted, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn debruijn_poisson_xlogx() {
        let f = ScalarField::univariate(
            "e^-k 1{k>=0}",
            |k| if k >= -0.5 { (-k).exp() } else { 0.0 },
            |k| if k >= -0.5 { -(-k).exp() } else { 0.0 },
        );
        let sg = Semigroup::Poisson { rate: 1.0 };
        let r = debruijn_check(&sg, &PhiFunction::xlogx(), &f, 1.0, &PS, &PS).unwrap();
        assert!(r.pass && r.sign_ok, "{r:?}");
    }

    #[test]
    fn debruijn_heat_xlogx() {
        let f = ScalarField::univariate("bump", |x| (-x * x / 2.0).exp(), |x| -x * (-x * x / 2.0).exp());
        let r = debruijn_check(&Semigroup::Heat { dim: 1 }, &PhiFunction::xlogx(), &f, 0.5, &GH, &GH).unwrap();
        assert!(r.pass && r.sign_ok, "{r:?}");
    }

    #[test]
    fn decay_square_linear() {
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        for rho in [0.5, 1.0, 2.0] {
            let sg = Semigroup::Ou { rho };
            let tr = decay_rate(&sg, &PhiFunction::square(), &x(), &times, &GH, &GH).unwrap();
            let rate = tr.fitted_rate.unwrap();
            assert!((rate + 2.0 * rho).abs() < 0.01 * 2.0 * rho);
            assert!(tr.monotone && tr.under_envelope);
        }
    }

    #[test]
    fn decay_constant_is_degenerate() {
        let tr = decay_rate(
            &Semigroup::Ou { rho: 1.0 },
            &PhiFunction::square(),
            &ScalarField::constant(1, 1.0),
            &[0.0, 0.5, 1.0],
            &GH,
            &GH,
        )
        .unwrap();
        assert!(tr.degenerate && tr.fitted_rate.is_none());
        assert!(tr.entropies.iter().all(|e| e.value == 0.0));
    }

    #[test]
    fn decay_xlogx_under_envelope() {
        let f = ScalarField::exponential(&[0.3], -0.045);
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.2).collect();
        let tr = decay_rate(&Semigroup::Ou { rho: 1.0 }, &PhiFunction::xlogx(), &f, &times, &GH, &GH).unwrap();
        assert!(tr.monotone && tr.under_envelope);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,entropy,envelope\n0,"));
    }

    #[test]
    fn local_examples() {
        let pois = Semigroup::Poisson { rate: 1.0 };
        let r = local_deficit(&pois, &PhiFunction::square(), &x(), 1.0, &[vec![0.0]], &PS).unwrap();
        assert!((r[0].lhs - 1.0).abs() < 1e-9 && (r[0].rhs - 1.0).abs() < 1e-12, "{:?}", r[0]);
        assert!(r[0].deficit.abs() < 1e-9);

        let f = ScalarField::exponential(&[0.2], 0.0);
        let probes = vec![vec![-2.0], vec![0.0], vec![2.0]];
        let rs = local_deficit(&Semigroup::Ou { rho: 1.0 }, &PhiFunction::xlogx(), &f, 0.8, &probes, &GH).unwrap();
        assert!(rs.iter().all(|r| r.pass && r.deficit.abs() < 1e-9 * r.lhs.max(1.0)), "exponentials are extremal");

        let c = ScalarField::constant(1, 3.0);
        let rs = local_deficit(&Semigroup::Heat { dim: 1 }, &PhiFunction::xlogx(), &c, 1.0, &[vec![0.0]], &GH).unwrap();
        assert_eq!(rs[0].lhs, 0.0);
        assert_eq!(rs[0].rhs, 0.0);
    }

    #[test]
    fn local_refuses_uncertified_phi() {
        let p4 = PhiFunction::power(4.0).unwrap();
        let err = local_deficit(&Semigroup::Ou { rho: 1.0 }, &p4, &x().shifted(5.0), 1.0, &[vec![0.0]], &GH);
        assert!(matches!(err, Err(Error::HypothesisRefused { .. })));
    }

    #[test]
    fn ou_invariance_and_commutation() {
        let f = ScalarField::univariate("sin+x^2/8", |x| x.sin() + x * x / 8.0, |x| x.cos() + x / 4.0);
        let ou = Semigroup::Ou { rho: 1.5 };
        let mu = ou.invariant(1).unwrap();
        let t = 0.6;
        let pt = ou.apply(t, &f, &GH).unwrap();
        let a = mu.expect(&pt, &GH).unwrap();
        let b = mu.expect(&f, &GH).unwrap();
        assert!((a - b).abs() < 1e-8);
        let abs_grad = ScalarField::univariate("|f'|", |x| (x.cos() + x / 4.0).abs(), |_| 0.0);
        let pg = ou.apply(t, &abs_grad, &GH).unwrap();
        for xv in [-2.0, -0.5, 0.0, 1.0, 3.0] {
            let lhs = pt.gradient(&[xv])[0].abs();
            assert!(lhs <= (-1.5 * t).exp() * pg.eval(&[xv]) + 1e-8);
        }
    }

    #[test]
    fn poisson_matches_law_at_horizon() {
        let f = ScalarField::univariate("sqrt(1+k)", |k| (1.0 + k).sqrt(), |k| 0.5 / (1.0 + k).sqrt());
        let sg = Semigroup::Poisson { rate: 2.0 };
        let pt = sg.apply(1.5, &f, &PS).unwrap();
        let law = Measure::poisson(3.0).unwrap();
        assert!((pt.eval(&[0.0]) - law.expect(&f, &PS).unwrap()).abs() < 1e-12);
        let atoms = kernel_atoms(&sg, 1.5, 0.0, &PS).unwrap();
        assert!((atoms.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
