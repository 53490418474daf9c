//! Probability measures and the expectation engine.
//!
//! Every measure is turned into weighted nodes by [`Measure::discretize`]
//! under an [`ExpectationPlan`]; expectations are fixed-order pairwise sums
//! over those nodes, so results never depend on thread scheduling.

mod plan;
mod sample;

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::field::{ScalarField, VectorMap};
use crate::numeric::pairwise_sum;

pub use plan::{ExpectationPlan, Nodes, poisson_truncation};
pub(crate) use plan::{hermite_rule, poisson_weights};
pub use sample::{write_samples_csv, SHARD_SIZE};

/// Finitely supported law on ℝ^d.
#[derive(Clone, Debug, PartialEq)]
pub struct Atoms {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Atoms {
    /// Points are given row by row; weights must form a simplex within 1e-12.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || weights.is_empty() || points.len() != dim * weights.len() {
            return Err(invalid(format!(
                "atoms: {} coordinates do not fit {} points in dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("atoms: weights must be finite and non-negative"));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(invalid("atoms: points must be finite"));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("atoms: weights sum to {total}, not 1")));
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Atoms {
            dim,
            points,
            weights,
            cumulative,
        })
    }

    /// One-dimensional atoms.
    pub fn line(points: &[f64], weights: &[f64]) -> Result<Self> {
        Atoms::new(1, points.to_vec(), weights.to_vec())
    }

    /// Rescales non-negative masses to a probability vector.
    pub fn normalized(dim: usize, points: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        let total = pairwise_sum(&masses);
        if !(total > 0.0) || !total.is_finite() {
            return Err(invalid("atoms: total mass must be positive"));
        }
        let weights = masses.iter().map(|m| m / total).collect();
        Atoms::new(dim, points, weights)
    }

    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        let n = points.len() / dim.max(1);
        Atoms::normalized(dim, points, vec![1.0; n])
    }

    pub fn dirac(point: &[f64]) -> Self {
        Atoms::new(point.len(), point.to_vec(), vec![1.0]).expect("dirac is a valid atom")
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

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the atom hit by a uniform draw u ∈ [0, 1).
    pub(crate) fn locate(&self, u: f64) -> usize {
        let total = *self.cumulative.last().unwrap();
        let i = self.cumulative.partition_point(|c| *c <= u * total);
        i.min(self.len() - 1)
    }
}

/// N(mean, cov) with a symmetric square root of the covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    mean: Vec<f64>,
    cov: Vec<f64>,
    factor: Vec<f64>,
    eigen_max: f64,
}

impl Gaussian {
    /// `cov` is row-major d×d, symmetric, with smallest eigenvalue ≥ −1e-12.
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.len() != d * d {
            return Err(invalid("gaussian: covariance must be d×d with d = len(mean)"));
        }
        if mean.iter().chain(&cov).any(|x| !x.is_finite()) {
            return Err(invalid("gaussian: non-finite parameter"));
        }
        let scale = cov.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for i in 0..d {
            for j in 0..i {
                if (cov[i * d + j] - cov[j * d + i]).abs() > 1e-12 * scale {
                    return Err(invalid("gaussian: covariance is not symmetric"));
                }
            }
        }
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &cov));
        let min = eig.eigenvalues.min();
        if min < -1e-12 {
            return Err(invalid(format!(
                "gaussian: covariance has eigenvalue {min:e} < 0"
            )));
        }
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let sqrt = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
        let factor = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| sqrt[(i, j)])
            .collect();
        Ok(Gaussian {
            mean,
            cov,
            factor,
            eigen_max: eig.eigenvalues.max(),
        })
    }

    pub fn standard(d: usize) -> Self {
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = 1.0;
        }
        Gaussian::new(vec![0.0; d], cov).expect("identity covariance")
    }

    /// N(mean, var) on the line.
    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Gaussian::new(vec![mean], vec![var])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &[f64] {
        &self.cov
    }

    /// Largest eigenvalue of the covariance.
    pub fn max_eigenvalue(&self) -> f64 {
        self.eigen_max
    }

    /// mean + Σ^{1/2} z.
    pub(crate) fn transform(&self, z: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let row = &self.factor[i * d..(i + 1) * d];
            out[i] = self.mean[i] + row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// Exponential tilt dν = Z⁻¹ e^B dμ of a base measure.
#[derive(Clone, Debug)]
pub struct Tilt {
    potential: ScalarField,
    base: Box<Measure>,
    normalizer: f64,
    sup: f64,
    inf: f64,
}

impl Tilt {
    pub fn potential(&self) -> &ScalarField {
        &self.potential
    }

    pub fn base(&self) -> &Measure {
        &self.base
    }

    /// Z = E_μ e^B under the base measure's default plan.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Upper bound on B used by the rejection sampler.
    pub fn sup(&self) -> f64 {
        self.sup
    }

    /// sup B − inf B: the declared codomain width when bounded, otherwise
    /// the spread over the base measure's default nodes.
    pub fn oscillation(&self) -> f64 {
        self.sup - self.inf
    }
}

#[derive(Clone, Debug)]
pub enum Measure {
    Atoms(Atoms),
    Gaussian(Gaussian),
    PoissonLaw { rate: f64 },
    Product(Vec<Measure>),
    Pushforward { map: VectorMap, base: Box<Measure> },
    Tilt(Tilt),
    Convolution(Vec<Measure>),
}

impl Measure {
    pub fn standard_normal() -> Measure {
        Measure::Gaussian(Gaussian::standard(1))
    }

    pub fn gaussian(mean: Vec<f64>, cov: Vec<f64>) -> Result<Measure> {
        Ok(Measure::Gaussian(Gaussian::new(mean, cov)?))
    }

    pub fn poisson(rate: f64) -> Result<Measure> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(invalid(format!("poisson: rate {rate} must be positive")));
        }
        Ok(Measure::PoissonLaw { rate })
    }

    pub fn atoms(points: &[f64], weights: &[f64]) -> Result<Measure> {
        Ok(Measure::Atoms(Atoms::line(points, weights)?))
    }

    pub fn product(factors: Vec<Measure>) -> Result<Measure> {
        if factors.is_empty() {
            return Err(invalid("product of no measures"));
        }
        Ok(Measure::Product(factors))
    }

    pub fn convolution(parts: Vec<Measure>) -> Result<Measure> {
        let Some(first) = parts.first() else {
            return Err(invalid("convolution of no measures"));
        };
        let d = first.dim();
        if parts.iter().any(|m| m.dim() != d) {
            return Err(invalid("convolution factors live in different dimensions"));
        }
        Ok(Measure::Convolution(parts))
    }

    pub fn pushforward(map: VectorMap, base: Measure) -> Result<Measure> {
        if map.in_dim() != base.dim() {
            return Err(invalid(format!(
                "pushforward: map expects R^{}, base lives in R^{}",
                map.in_dim(),
                base.dim()
            )));
        }
        Ok(Measure::Pushforward {
            map,
            base: Box::new(base),
        })
    }

    /// dν = Z⁻¹ e^B dμ. B must be bounded above on the base's nodes.
    pub fn tilt(potential: ScalarField, base: Measure) -> Result<Measure> {
        if potential.arity() != base.dim() {
            return Err(invalid("tilt: potential arity differs from base dimension"));
        }
        let plan = ExpectationPlan::default_for(&base);
        let nodes = base.discretize(&plan)?;
        let values = nodes.eval(&potential, "tilt potential")?;
        let node_max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let node_min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let cod = potential.codomain();
        let (sup, inf) = if cod.is_bounded() {
            (cod.hi, cod.lo)
        } else {
            (node_max, node_min)
        };
        let shifted: Vec<f64> = values.iter().map(|b| (b - sup).exp()).collect();
        let normalizer = nodes.integrate(&shifted) * sup.exp();
        if !(normalizer > 0.0) || !normalizer.is_finite() {
            return Err(Error::NonFinite {
                context: "tilt normalizer".into(),
                value: normalizer,
            });
        }
        Ok(Measure::Tilt(Tilt {
            potential,
            base: Box::new(base),
            normalizer,
            sup,
            inf,
        }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Measure::Atoms(a) => a.dim(),
            Measure::Gaussian(g) => g.dim(),
            Measure::PoissonLaw { .. } => 1,
            Measure::Product(fs) => fs.iter().map(Measure::dim).sum(),
            Measure::Pushforward { map, .. } => map.out_dim(),
            Measure::Tilt(t) => t.base.dim(),
            Measure::Convolution(ps) => ps.first().map_or(0, Measure::dim),
        }
    }

    /// Short human-readable description for reports and errors.
    pub fn describe(&self) -> String {
        match self {
            Measure::Atoms(a) => format!("Atoms(n={}, d={})", a.len(), a.dim()),
            Measure::Gaussian(g) => format!("N({:?}, {:?})", g.mean(), g.cov()),
            Measure::PoissonLaw { rate } => format!("Poisson({rate})"),
            Measure::Product(fs) => {
                let parts: Vec<String> = fs.iter().map(Measure::describe).collect();
                parts.join(" ⊗ ")
            }
            Measure::Pushforward { map, base } => format!("{}#{}", map.name(), base.describe()),
            Measure::Tilt(t) => format!("e^({})·{}", t.potential.name(), t.base.describe()),
            Measure::Convolution(ps) => {
                let parts: Vec<String> = ps.iter().map(Measure::describe).collect();
                parts.join(" * ")
            }
        }
    }

    /// (Gaussian coordinates, has Poisson leaf, has non-atom leaf).
    pub(crate) fn leaf_profile(&self) -> (usize, bool, bool) {
        match self {
            Measure::Atoms(_) => (0, false, false),
            Measure::Gaussian(g) => (g.dim(), false, true),
            Measure::PoissonLaw { .. } => (0, true, true),
            Measure::Product(fs) | Measure::Convolution(fs) => {
                fs.iter().fold((0, false, false), |acc, m| {
                    let p = m.leaf_profile();
                    (acc.0 + p.0, acc.1 || p.1, acc.2 || p.2)
                })
            }
            Measure::Pushforward { base, .. } => base.leaf_profile(),
            Measure::Tilt(t) => t.base.leaf_profile(),
        }
    }

    /// E_μ f under the plan.
    pub fn expect(&self, f: &ScalarField, plan: &ExpectationPlan) -> Result<f64> {
        if f.arity() != self.dim() {
            return Err(invalid(format!(
                "field {} has arity {}, measure lives in R^{}",
                f.name(),
                f.arity(),
                self.dim()
            )));
        }
        self.discretize(plan)?.expect(f)
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Free-function form of [`Measure::expect`].
pub fn expect(mu: &Measure, f: &ScalarField, plan: &ExpectationPlan) -> Result<f64> {
    mu.expect(f, plan)
}

/// Smallest Hessian eigenvalue of W over the grid, by central differences.
pub fn log_concavity_rho(w: &ScalarField, grid: &[Vec<f64>]) -> Result<f64> {
    if grid.is_empty() {
        return Err(invalid("log_concavity_rho: empty grid"));
    }
    let mut rho = f64::INFINITY;
    for x in grid {
        let h = hessian_fd(w, x)?;
        let d = x.len();
        let m = DMatrix::from_row_slice(d, d, &h);
        rho = rho.min(SymmetricEigen::new(m).eigenvalues.min());
    }
    Ok(rho)
}

/// Curvature bound 1/λ_max(Σ) of a Gaussian.
pub fn gaussian_rho(g: &Gaussian) -> f64 {
    1.0 / g.max_eigenvalue()
}

fn hessian_fd(w: &ScalarField, x: &[f64]) -> Result<Vec<f64>> {
    let d = x.len();
    let steps: Vec<f64> = x
        .iter()
        .map(|xi| f64::EPSILON.powf(0.25) * xi.abs().max(1.0))
        .collect();
    let mut p = x.to_vec();
    let at = |p: &mut Vec<f64>, moves: &[(usize, f64)]| {
        for &(i, s) in moves {
            p[i] = x[i] + s;
        }
        let v = w.eval(p);
        for &(i, _) in moves {
            p[i] = x[i];
        }
        v
    };
    let f0 = w.eval(x);
    let mut h = vec![0.0; d * d];
    for i in 0..d {
        let hi = steps[i];
        let val = (at(&mut p, &[(i, hi)]) - 2.0 * f0 + at(&mut p, &[(i, -hi)])) / (hi * hi);
        h[i * d + i] = val;
        for j in 0..i {
            let hj = steps[j];
            let val = (at(&mut p, &[(i, hi), (j, hj)]) - at(&mut p, &[(i, hi), (j, -hj)])
                - at(&mut p, &[(i, -hi), (j, hj)])
                + at(&mut p, &[(i, -hi), (j, -hj)]))
                / (4.0 * hi * hj);
            h[i * d + j] = val;
            h[j * d + i] = val;
        }
    }
    if let Some(bad) = h.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("Hessian of {}", w.name()),
            value: *bad,
        });
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;

    fn sq() -> ScalarField {
        ScalarField::univariate("x^2", |x| x * x, |x| 2.0 * x)
    }

    #[test]
    fn poisson_mean() {
        let mu = Measure::poisson(1.0).unwrap();
        let f = ScalarField::coordinate(1, 0);
        let m = mu.expect(&f, &ExpectationPlan::PoissonSum { tail_tol: 1e-12 }).unwrap();
        assert!((m - 1.0).abs() < 1e-10);
    }

    #[test]
    fn standard_normal_second_moment() {
        let mu = Measure::standard_normal();
        let m = mu.expect(&sq(), &ExpectationPlan::GaussHermite { order: 40 }).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlated_gaussian_moments() {
        let mu = Measure::gaussian(vec![1.0, -1.0], vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        let f = ScalarField::new("x1 x2", 2, |x| x[0] * x[1]);
        let m = mu.expect(&f, &ExpectationPlan::GaussHermite { order: 20 }).unwrap();
        assert!((m - (0.5 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn constant_tilt_cancels() {
        let base = Measure::standard_normal();
        let f = ScalarField::univariate("cos", f64::cos, |x| -x.sin());
        let plan = ExpectationPlan::GaussHermite { order: 40 };
        let plain = base.expect(&f, &plan).unwrap();
        let tilted = Measure::tilt(ScalarField::constant(1, 3.7), base).unwrap();
        let t = tilted.expect(&f, &plan).unwrap();
        assert!((t - plain).abs() < 1e-15);
        if let Measure::Tilt(tl) = &tilted {
            assert!((tl.normalizer() - 3.7f64.exp()).abs() < 1e-12);
            assert_eq!(tl.oscillation(), 0.0);
        }
    }

    #[test]
    fn gauss_hermite_rejects_atoms() {
        let mu = Measure::atoms(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        let err = mu.expect(&sq(), &ExpectationPlan::GaussHermite { order: 10 });
        assert!(matches!(err, Err(Error::PlanMismatch { .. })));
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        let mu = Measure::atoms(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        let f = ScalarField::univariate("1/x", |x| 1.0 / x, |x| -1.0 / (x * x));
        assert!(matches!(
            mu.expect(&f, &ExpectationPlan::ExactAtoms),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn product_factorizes() {
        let mu = Measure::product(vec![
            Measure::standard_normal(),
            Measure::atoms(&[1.0, 2.0, 4.0], &[0.2, 0.3, 0.5]).unwrap(),
        ])
        .unwrap();
        let f = ScalarField::new("x^2 y", 2, |x| x[0] * x[0] * x[1]);
        let m = mu.expect(&f, &ExpectationPlan::GaussHermite { order: 40 }).unwrap();
        assert!((m - (0.2 + 0.6 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn pushforward_and_convolution() {
        let push = Measure::pushforward(VectorMap::affine(1, 0.5, 1.0), Measure::standard_normal()).unwrap();
        let plan = ExpectationPlan::GaussHermite { order: 40 };
        let m = push.expect(&sq(), &plan).unwrap();
        assert!((m - (0.25 + 1.0)).abs() < 1e-12);
        let conv =
            Measure::convolution(vec![Measure::standard_normal(), Measure::standard_normal()]).unwrap();
        assert!((conv.expect(&sq(), &plan).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rho_examples() {
        let half_sq = ScalarField::new("|x|^2/2", 2, |x| 0.5 * (x[0] * x[0] + x[1] * x[1]));
        let grid = vec![vec![0.0, 0.0], vec![1.0, -2.0], vec![3.0, 0.5]];
        let rho = log_concavity_rho(&half_sq, &grid).unwrap();
        assert!((rho - 1.0).abs() < 1e-6);

        let quartic = ScalarField::new("x^4", 1, |x| x[0].powi(4));
        let rho = log_concavity_rho(&quartic, &[vec![-1.0], vec![0.0], vec![1.0]]).unwrap();
        assert!(rho.abs() < 1e-6);

        let g = Gaussian::new(vec![0.0, 0.0], vec![4.0, 1.0, 1.0, 2.0]).unwrap();
        let lmax = 3.0 + 2f64.sqrt();
        assert!((gaussian_rho(&g) - 1.0 / lmax).abs() < 1e-12);
    }

    #[test]
    fn invalid_constructions() {
        assert!(Atoms::line(&[0.0, 1.0], &[0.5, 0.4]).is_err());
        assert!(Gaussian::new(vec![0.0, 0.0], vec![1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(Gaussian::new(vec![0.0, 0.0], vec![1.0, 0.2, 0.1, 1.0]).is_err());
        assert!(Measure::poisson(0.0).is_err());
        assert!(Measure::convolution(vec![Measure::standard_normal(), Measure::Gaussian(Gaussian::standard(2))]).is_err());
    }
}
