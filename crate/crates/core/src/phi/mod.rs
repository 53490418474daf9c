//! Convex base functions Φ, the derived functions Φ̂ and Ψ, and the
//! hypothesis checkers (H1), (H2), (H2').
//!
//! Built-ins carry analytic derivatives up to order four. Custom functions
//! fall back to central finite differences whose step is reported by
//! [`PhiFunction::fd_step`].

mod conditions;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;

pub use conditions::{
    certify, check_default, check_h1, check_h2, check_h2prime, ConditionReport, Hypothesis, IntervalGrid,
    TOL_CONVEXITY,
};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Config-level description of a Φ, e.g. `phi = {kind = "power", p = 1.5}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "PhiSpecRaw")]
pub enum PhiSpec {
    #[serde(rename = "xlogx")]
    XLogX,
    Power {
        p: f64,
    },
    Square,
    Quadratic {
        a: f64,
        b: f64,
        c: f64,
    },
    /// Non-negative combination `Σ λᵢ Φᵢ + λ₃ x + λ₄`.
    Cone {
        terms: Vec<ConeTerm>,
        #[serde(default)]
        affine: [f64; 2],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeTerm {
    pub phi: PhiSpec,
    pub weight: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PhiSpecRaw {
    kind: String,
    p: Option<f64>,
    a: Option<f64>,
    b: Option<f64>,
    c: Option<f64>,
    terms: Option<Vec<ConeTerm>>,
    affine: Option<[f64; 2]>,
}

impl TryFrom<PhiSpecRaw> for PhiSpec {
    type Error = String;

    fn try_from(r: PhiSpecRaw) -> std::result::Result<Self, String> {
        let given = [
            ("p", r.p.is_some()),
            ("a", r.a.is_some()),
            ("b", r.b.is_some()),
            ("c", r.c.is_some()),
            ("terms", r.terms.is_some()),
            ("affine", r.affine.is_some()),
        ];
        let allowed: &[&str] = match r.kind.as_str() {
            "xlogx" | "square" => &[],
            "power" => &["p"],
            "quadratic" => &["a", "b", "c"],
            "cone" => &["terms", "affine"],
            other => return Err(format!("unknown phi kind `{other}`")),
        };
        if let Some((k, _)) = given.iter().find(|(k, set)| *set && !allowed.contains(k)) {
            return Err(format!("key `{k}` does not apply to phi kind `{}`", r.kind));
        }
        let need = |name: &str, v: Option<f64>| v.ok_or_else(|| format!("phi kind `{}` needs `{name}`", r.kind));
        Ok(match r.kind.as_str() {
            "xlogx" => PhiSpec::XLogX,
            "square" => PhiSpec::Square,
            "power" => PhiSpec::Power { p: need("p", r.p)? },
            "quadratic" => PhiSpec::Quadratic {
                a: need("a", r.a)?,
                b: r.b.unwrap_or(0.0),
                c: r.c.unwrap_or(0.0),
            },
            _ => PhiSpec::Cone {
                terms: r.terms.unwrap_or_default(),
                affine: r.affine.unwrap_or([0.0, 0.0]),
            },
        })
    }
}

impl PhiSpec {
    pub fn build(&self) -> Result<PhiFunction> {
        match self {
            PhiSpec::XLogX => Ok(PhiFunction::xlogx()),
            PhiSpec::Power { p } => PhiFunction::power(*p),
            PhiSpec::Square => Ok(PhiFunction::square()),
            PhiSpec::Quadratic { a, b, c } => PhiFunction::quadratic(*a, *b, *c),
            PhiSpec::Cone { terms, affine } => {
                let built = terms
                    .iter()
                    .map(|t| Ok((t.phi.build()?, t.weight)))
                    .collect::<Result<Vec<_>>>()?;
                cone_combine(&built, (affine[0], affine[1]))
            }
        }
    }
}

#[derive(Clone)]
enum Repr {
    XLogX,
    Power(f64),
    Square,
    Quadratic {
        a: f64,
        b: f64,
        c: f64,
    },
    Cone {
        terms: Vec<(PhiFunction, f64)>,
        linear: f64,
        constant: f64,
    },
    Custom {
        eval: RealFn,
        derivs: [Option<RealFn>; 4],
    },
}

/// A smooth convex Φ : I → ℝ.
#[derive(Clone)]
pub struct PhiFunction {
    name: String,
    interval: Interval,
    repr: Repr,
    flag: Option<String>,
}

impl fmt::Debug for PhiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhiFunction")
            .field("name", &self.name)
            .field("interval", &self.interval)
            .field("flag", &self.flag)
            .finish()
    }
}

impl PhiFunction {
    /// Φ(x) = x log x on ℝ₊ (with Φ(0) = 0).
    pub fn xlogx() -> Self {
        PhiFunction {
            name: "xlogx".into(),
            interval: Interval::NONNEGATIVE,
            repr: Repr::XLogX,
            flag: None,
        }
    }

    /// Φ(x) = x^p on ℝ₊. Exponents p ≤ 1 are rejected; p > 2 is accepted but
    /// flagged as outside the regime 1 < p ≤ 2.
    pub fn power(p: f64) -> Result<Self> {
        if !p.is_finite() || p <= 1.0 {
            return Err(Error::InvalidPhi(format!(
                "x^p with p = {p} is not strictly convex on R+"
            )));
        }
        let flag = (p > 2.0).then(|| format!("p = {p} lies outside 1 < p <= 2"));
        Ok(PhiFunction {
            name: format!("power({p})"),
            interval: Interval::NONNEGATIVE,
            repr: Repr::Power(p),
            flag,
        })
    }

    /// Φ(x) = x² on ℝ.
    pub fn square() -> Self {
        PhiFunction {
            name: "square".into(),
            interval: Interval::REAL,
            repr: Repr::Square,
            flag: None,
        }
    }

    /// Φ(x) = a x² + b x + c on ℝ, a ≥ 0.
    pub fn quadratic(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a >= 0.0) || !b.is_finite() || !c.is_finite() || !a.is_finite() {
            return Err(Error::InvalidPhi(format!(
                "quadratic({a}, {b}, {c}) is not convex"
            )));
        }
        Ok(PhiFunction {
            name: format!("quadratic({a},{b},{c})"),
            interval: Interval::REAL,
            repr: Repr::Quadratic { a, b, c },
            flag: None,
        })
    }

    /// A user supplied Φ. Derivatives not attached with
    /// [`with_derivative`](Self::with_derivative) are taken by finite
    /// differences.
    pub fn custom(
        name: impl Into<String>,
        interval: Interval,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PhiFunction {
            name: name.into(),
            interval,
            repr: Repr::Custom {
                eval: Arc::new(eval),
                derivs: [None, None, None, None],
            },
            flag: None,
        }
    }

    /// Attach an analytic derivative of the given order (1..=4) to a custom Φ.
    pub fn with_derivative(
        mut self,
        order: usize,
        d: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        assert!((1..=4).contains(&order), "derivative order must be 1..=4");
        if let Repr::Custom { derivs, .. } = &mut self.repr {
            derivs[order - 1] = Some(Arc::new(d));
        }
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    /// Set when the function was accepted outside its documented regime.
    pub fn flag(&self) -> Option<&str> {
        self.flag.as_deref()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.derivative(0, x)
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.derivative(1, x)
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.derivative(2, x)
    }

    pub fn d3(&self, x: f64) -> f64 {
        self.derivative(3, x)
    }

    pub fn d4(&self, x: f64) -> f64 {
        self.derivative(4, x)
    }

    /// Φ⁽ᵏ⁾(x) for k ∈ 0..=4.
    pub fn derivative(&self, order: usize, x: f64) -> f64 {
        match &self.repr {
            Repr::XLogX => match order {
                0 => {
                    if x == 0.0 {
                        0.0
                    } else {
                        x * x.ln()
                    }
                }
                1 => x.ln() + 1.0,
                2 => 1.0 / x,
                3 => -1.0 / (x * x),
                4 => 2.0 / (x * x * x),
                _ => unreachable!(),
            },
            Repr::Power(p) => {
                let p = *p;
                let mut coeff = 1.0;
                for j in 0..order {
                    coeff *= p - j as f64;
                }
                if x == 0.0 {
                    let e = p - order as f64;
                    return if e > 0.0 {
                        0.0
                    } else if e == 0.0 {
                        coeff
                    } else {
                        coeff.signum() * f64::INFINITY
                    };
                }
                coeff * x.powf(p - order as f64)
            }
            Repr::Square => match order {
                0 => x * x,
                1 => 2.0 * x,
                2 => 2.0,
                _ => 0.0,
            },
            Repr::Quadratic { a, b, c } => match order {
                0 => (a * x + b) * x + c,
                1 => 2.0 * a * x + b,
                2 => 2.0 * a,
                _ => 0.0,
            },
            Repr::Cone {
                terms,
                linear,
                constant,
            } => {
                let mut total = match order {
                    0 => linear * x + constant,
                    1 => *linear,
                    _ => 0.0,
                };
                for (phi, w) in terms {
                    if *w != 0.0 {
                        total += w * phi.derivative(order, x);
                    }
                }
                total
            }
            Repr::Custom { eval, derivs } => {
                if order == 0 {
                    return eval(x);
                }
                match &derivs[order - 1] {
                    Some(d) => d(x),
                    None => self.fd_derivative(order, x),
                }
            }
        }
    }

    /// Whether the derivative of this order is available in closed form.
    pub fn has_analytic(&self, order: usize) -> bool {
        match &self.repr {
            Repr::Custom { derivs, .. } => order == 0 || derivs[order - 1].is_some(),
            Repr::Cone { terms, .. } => terms.iter().all(|(p, _)| p.has_analytic(order)),
            _ => true,
        }
    }

    /// Finite-difference step used at `x` for the given derivative order.
    pub fn fd_step(&self, order: usize, x: f64) -> f64 {
        let eps = f64::EPSILON;
        let (power, reach) = match order {
            1 => (1.0 / 3.0, 1.0),
            2 => (1.0 / 4.0, 1.0),
            3 => (1.0 / 5.0, 2.0),
            _ => (1.0 / 6.0, 2.0),
        };
        let scale = x.abs().max(1.0).min(self.interval.distance_to_boundary(x));
        let h = eps.powf(power) * scale;
        let room = self.interval.distance_to_boundary(x) / (reach + 1.0);
        h.min(room)
    }

    fn fd_derivative(&self, order: usize, x: f64) -> f64 {
        let f = |t: f64| self.eval(t);
        let h = self.fd_step(order, x);
        match order {
            1 => (f(x + h) - f(x - h)) / (2.0 * h),
            2 => (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h),
            3 => (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h),
            _ => {
                (f(x + 2.0 * h) - 4.0 * f(x + h) + 6.0 * f(x) - 4.0 * f(x - h) + f(x - 2.0 * h))
                    / (h * h * h * h)
            }
        }
    }

    fn require_in(&self, what: &str, x: f64) -> Result<()> {
        if self.interval.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain {
                what: what.to_string(),
                value: x,
                interval: self.interval.to_string(),
            })
        }
    }

    /// Φ̂(u) = Φ(u) − Φ(1)·u.
    pub fn phi_hat(&self, u: f64) -> Result<f64> {
        self.require_in("u", u)?;
        Ok(self.phi_hat_unchecked(u))
    }

    pub(crate) fn phi_hat_unchecked(&self, u: f64) -> f64 {
        self.eval(u) - self.eval(1.0) * u
    }

    /// Ψ(u, v) = Φ(u + v) − Φ(u) − Φ'(u)·v, defined for (u, u + v) ∈ I × I.
    pub fn psi(&self, u: f64, v: f64) -> Result<f64> {
        self.require_in("u", u)?;
        self.require_in("u + v", u + v)?;
        Ok(self.psi_unchecked(u, v))
    }

    pub(crate) fn psi_unchecked(&self, u: f64, v: f64) -> f64 {
        if v == 0.0 {
            return 0.0;
        }
        match &self.repr {
            Repr::Square => v * v,
            Repr::Quadratic { a, .. } => a * v * v,
            Repr::XLogX if u > 0.0 => u * xlogx_remainder(v / u),
            Repr::Power(p) if u > 0.0 => u.powf(*p) * power_remainder(*p, v / u),
            Repr::Cone { terms, .. } => terms.iter().map(|(phi, w)| w * phi.psi_unchecked(u, v)).sum(),
            _ => self.eval(u + v) - self.eval(u) - self.d1(u) * v,
        }
    }

    /// The same Φ shifted by a constant so that Φ(0) = 0. Fails when 0 ∉ I.
    pub fn normalized_at_zero(&self) -> Result<PhiFunction> {
        self.require_in("0", 0.0)?;
        let shift = self.eval(0.0);
        if shift == 0.0 {
            return Ok(self.clone());
        }
        let mut out = cone_combine(&[(self.clone(), 1.0)], (0.0, -shift))?;
        out.name = format!("{}-normalized", self.name);
        Ok(out)
    }

    /// Largest scaled gap between each analytic derivative and a central
    /// difference of the next lower one, over the probe points.
    pub fn derivative_consistency(&self, probes: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for &x in probes {
            if !self.interval.contains_interior(x) {
                continue;
            }
            let scale = x.abs().max(1.0).min(self.interval.distance_to_boundary(x));
            let h = f64::EPSILON.cbrt() * scale;
            if h >= self.interval.distance_to_boundary(x) {
                continue;
            }
            for order in 1..=4 {
                if !self.has_analytic(order) {
                    continue;
                }
                let analytic = self.derivative(order, x);
                let fd = (self.derivative(order - 1, x + h) - self.derivative(order - 1, x - h))
                    / (2.0 * h);
                let gap = (analytic - fd).abs() / (1.0 + analytic.abs());
                worst = worst.max(gap);
            }
        }
        worst
    }
}

/// (1 + s) ln(1 + s) − s, accurate for small s.
fn xlogx_remainder(s: f64) -> f64 {
    if s.abs() < 1e-3 {
        let s2 = s * s;
        s2 * (0.5 - s / 6.0 + s2 / 12.0 - s2 * s / 20.0 + s2 * s2 / 30.0)
    } else if s == -1.0 {
        1.0
    } else {
        (1.0 + s) * s.ln_1p() - s
    }
}

/// (1 + s)^p − 1 − p s, accurate for small s.
fn power_remainder(p: f64, s: f64) -> f64 {
    if s.abs() < 1e-3 {
        let mut coeff = p * (p - 1.0) / 2.0;
        let mut pow = s * s;
        let mut acc = 0.0;
        for k in 2..8 {
            acc += coeff * pow;
            coeff *= (p - k as f64) / (k as f64 + 1.0);
            pow *= s;
        }
        acc
    } else if s == -1.0 {
        p - 1.0
    } else {
        (p * s.ln_1p()).exp_m1() - p * s
    }
}

/// Non-negative combination `Σ λᵢ Φᵢ + λ₃ x + λ₄` on the common interval.
pub fn cone_combine(terms: &[(PhiFunction, f64)], affine: (f64, f64)) -> Result<PhiFunction> {
    if terms.is_empty() {
        return Err(Error::InvalidPhi(
            "cone combination needs at least one convex term".into(),
        ));
    }
    let mut interval = Interval::REAL;
    let mut parts = Vec::with_capacity(terms.len());
    for (phi, w) in terms {
        if !(*w >= 0.0) || !w.is_finite() {
            return Err(Error::InvalidPhi(format!(
                "coefficient {w} on {} must be non-negative",
                phi.name
            )));
        }
        interval = interval.intersect(&phi.interval).ok_or_else(|| {
            Error::InvalidPhi(format!("interval of {} does not meet the others", phi.name))
        })?;
        parts.push(format!("{w}*{}", phi.name));
    }
    if !affine.0.is_finite() || !affine.1.is_finite() {
        return Err(Error::InvalidPhi("affine part must be finite".into()));
    }
    let flag = terms
        .iter()
        .filter_map(|(p, _)| p.flag.clone())
        .next();
    Ok(PhiFunction {
        name: format!("{}+{}x+{}", parts.join("+"), affine.0, affine.1),
        interval,
        repr: Repr::Cone {
            terms: terms.to_vec(),
            linear: affine.0,
            constant: affine.1,
        },
        flag,
    })
}
