//! Real-valued test functions on ℝ^d and vector maps between Euclidean spaces.

use std::fmt;
use std::sync::Arc;

use crate::interval::Interval;

type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// f : ℝ^d → I with an optional analytic gradient.
#[derive(Clone)]
pub struct ScalarField {
    name: String,
    arity: usize,
    eval: EvalFn,
    grad: Option<GradFn>,
    codomain: Interval,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("analytic_grad", &self.grad.is_some())
            .field("codomain", &self.codomain)
            .finish()
    }
}

impl ScalarField {
    pub fn new(
        name: impl Into<String>,
        arity: usize,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ScalarField {
            name: name.into(),
            arity,
            eval: Arc::new(eval),
            grad: None,
            codomain: Interval::REAL,
        }
    }

    /// One-dimensional field from `f` and its derivative.
    pub fn univariate(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ScalarField::new(name, 1, move |x| f(x[0])).with_grad(move |x| vec![df(x[0])])
    }

    pub fn with_grad(mut self, grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    /// Declare the interval the field maps into.
    pub fn with_codomain(mut self, codomain: Interval) -> Self {
        self.codomain = codomain;
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn codomain(&self) -> Interval {
        self.codomain
    }

    pub fn has_grad(&self) -> bool {
        self.grad.is_some()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// Analytic gradient when attached, central differences otherwise.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.grad {
            Some(g) => g(x),
            None => self.fd_gradient(x),
        }
    }

    pub fn fd_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|i| {
                let h = f64::EPSILON.cbrt() * x[i].abs().max(1.0);
                probe[i] = x[i] + h;
                let up = self.eval(&probe);
                probe[i] = x[i] - h;
                let down = self.eval(&probe);
                probe[i] = x[i];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    /// |∇f(x)|².
    pub fn grad_norm_sq(&self, x: &[f64]) -> f64 {
        self.gradient(x).iter().map(|g| g * g).sum()
    }

    /// Largest relative gap between the analytic gradient and central
    /// differences over the probes (0 when no analytic gradient is attached).
    pub fn grad_consistency(&self, probes: &[Vec<f64>]) -> f64 {
        let Some(g) = &self.grad else { return 0.0 };
        let mut worst: f64 = 0.0;
        for x in probes {
            let a = g(x);
            let fd = self.fd_gradient(x);
            for (ai, fi) in a.iter().zip(&fd) {
                worst = worst.max((ai - fi).abs() / (1.0 + ai.abs()));
            }
        }
        worst
    }

    /// x ↦ f(x) + c.
    pub fn shifted(&self, c: f64) -> ScalarField {
        let inner = self.clone();
        let mut out = ScalarField::new(format!("{}+{c}", self.name), self.arity, move |x| {
            inner.eval(x) + c
        });
        if let Some(g) = &self.grad {
            out.grad = Some(g.clone());
        }
        out.codomain = Interval::new(self.codomain.lo + c, self.codomain.hi + c);
        out
    }

    /// x ↦ f(x + a) for a fixed translation `a`.
    pub fn translated(&self, a: &[f64]) -> ScalarField {
        let shift = a.to_vec();
        let inner = self.clone();
        let s2 = shift.clone();
        let mut out = ScalarField::new(
            format!("{}(.+{:?})", self.name, a),
            self.arity,
            move |x| {
                let y: Vec<f64> = x.iter().zip(&shift).map(|(xi, ai)| xi + ai).collect();
                inner.eval(&y)
            },
        );
        if let Some(g) = self.grad.clone() {
            out.grad = Some(Arc::new(move |x: &[f64]| {
                let y: Vec<f64> = x.iter().zip(&s2).map(|(xi, ai)| xi + ai).collect();
                g(&y)
            }));
        }
        out.codomain = self.codomain;
        out
    }

    /// f ∘ Θ. The gradient is left to finite differences.
    pub fn compose(&self, map: &VectorMap) -> ScalarField {
        let inner = self.clone();
        let m = map.clone();
        let mut out = ScalarField::new(
            format!("{}∘{}", self.name, map.name()),
            map.in_dim(),
            move |x| inner.eval(&m.apply(x)),
        );
        out.codomain = self.codomain;
        out
    }

    /// Constant field.
    pub fn constant(arity: usize, c: f64) -> ScalarField {
        ScalarField::new(format!("const({c})"), arity, move |_| c)
            .with_grad(move |x| vec![0.0; x.len()])
            .with_codomain(Interval::new(c, c))
    }

    /// x ↦ ⟨a, x⟩ + b.
    pub fn linear(coeffs: &[f64], intercept: f64) -> ScalarField {
        let a = coeffs.to_vec();
        let a2 = a.clone();
        ScalarField::new(format!("linear({coeffs:?},{intercept})"), a.len(), move |x| {
            a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + intercept
        })
        .with_grad(move |_| a2.clone())
    }

    /// x ↦ exp(⟨θ, x⟩ + shift), positive.
    pub fn exponential(theta: &[f64], shift: f64) -> ScalarField {
        let t = theta.to_vec();
        let t2 = t.clone();
        let arg = move |x: &[f64], t: &[f64]| t.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + shift;
        ScalarField::new(format!("exp({theta:?}.x+{shift})"), t.len(), move |x| {
            arg(x, &t).exp()
        })
        .with_grad(move |x| {
            let e = arg(x, &t2).exp();
            t2.iter().map(|ti| ti * e).collect()
        })
        .with_codomain(Interval::NONNEGATIVE)
    }

    /// offset + amplitude·sin(frequency·x + phase) on ℝ.
    pub fn sine(amplitude: f64, frequency: f64, phase: f64, offset: f64) -> ScalarField {
        ScalarField::univariate(
            format!("{offset}+{amplitude}sin({frequency}x+{phase})"),
            move |x| offset + amplitude * (frequency * x + phase).sin(),
            move |x| amplitude * frequency * (frequency * x + phase).cos(),
        )
        .with_codomain(Interval::new(
            offset - amplitude.abs(),
            offset + amplitude.abs(),
        ))
    }

    /// The i-th coordinate on ℝ^arity.
    pub fn coordinate(arity: usize, i: usize) -> ScalarField {
        assert!(i < arity, "coordinate index out of range");
        ScalarField::new(format!("x{}", i + 1), arity, move |x| x[i]).with_grad(move |x| {
            let mut g = vec![0.0; x.len()];
            g[i] = 1.0;
            g
        })
    }

    /// Values on the integers 0..values.len(). Points off the table evaluate
    /// to NaN, which every consumer rejects as non-finite.
    pub fn tabulated(values: &[f64]) -> ScalarField {
        let v = values.to_vec();
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ScalarField::new(format!("table[{}]", v.len()), 1, move |x| {
            let k = x[0].round();
            if (x[0] - k).abs() > 1e-9 || k < 0.0 || k as usize >= v.len() {
                f64::NAN
            } else {
                v[k as usize]
            }
        })
        .with_codomain(Interval::new(lo, hi))
    }
}

/// Θ : ℝ^d → ℝ^{d'}.
#[derive(Clone)]
pub struct VectorMap {
    name: String,
    in_dim: usize,
    out_dim: usize,
    f: MapFn,
}

impl fmt::Debug for VectorMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorMap({}: R^{} -> R^{})", self.name, self.in_dim, self.out_dim)
    }
}

impl VectorMap {
    pub fn new(
        name: impl Into<String>,
        in_dim: usize,
        out_dim: usize,
        f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        VectorMap {
            name: name.into(),
            in_dim,
            out_dim,
            f: Arc::new(f),
        }
    }

    /// Coordinate-wise x ↦ a·x + b.
    pub fn affine(dim: usize, a: f64, b: f64) -> Self {
        VectorMap::new(format!("{a}x+{b}"), dim, dim, move |x| {
            x.iter().map(|xi| a * xi + b).collect()
        })
    }

    /// Scalar map applied to a single coordinate.
    pub fn scalar(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        VectorMap::new(name, 1, 1, move |x| vec![f(x[0])])
    }

    /// (x₁, …, x_d) ↦ x₁ + … + x_d.
    pub fn sum(dim: usize) -> Self {
        VectorMap::new("sum", dim, 1, |x| vec![x.iter().sum()])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    #[inline]
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_gradients_match_differences() {
        let probes: Vec<Vec<f64>> = vec![vec![-1.3, 0.4], vec![0.0, 2.0], vec![3.0, -0.5]];
        let e = ScalarField::exponential(&[0.3, -0.7], 0.1);
        assert!(e.grad_consistency(&probes) < 1e-5);
        let l = ScalarField::linear(&[2.0, -1.0], 4.0);
        assert!(l.grad_consistency(&probes) < 1e-5);
        let s = ScalarField::sine(0.7, 1.3, 0.2, 0.0);
        assert!(s.grad_consistency(&[vec![0.3], vec![-2.0]]) < 1e-5);
    }

    #[test]
    fn tabulated_rejects_off_table() {
        let t = ScalarField::tabulated(&[1.0, 2.0, 5.0]);
        assert_eq!(t.eval(&[2.0]), 5.0);
        assert!(t.eval(&[3.0]).is_nan());
        assert!(t.eval(&[0.5]).is_nan());
        assert_eq!(t.codomain(), Interval::new(1.0, 5.0));
    }

    #[test]
    fn translation_and_composition() {
        let f = ScalarField::univariate("sq", |x| x * x, |x| 2.0 * x);
        let g = f.translated(&[1.0]);
        assert_eq!(g.eval(&[2.0]), 9.0);
        assert_eq!(g.gradient(&[2.0]), vec![6.0]);
        let h = f.compose(&VectorMap::affine(1, 0.5, 0.0));
        assert_eq!(h.eval(&[4.0]), 4.0);
        assert!((h.gradient(&[4.0])[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn shift_keeps_gradient() {
        let f = ScalarField::linear(&[3.0], 0.0).shifted(10.0);
        assert_eq!(f.eval(&[1.0]), 13.0);
        assert_eq!(f.gradient(&[5.0]), vec![3.0]);
    }
}
