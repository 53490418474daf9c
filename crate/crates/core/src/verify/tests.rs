use super::*;
use crate::measure::Atoms;

const GH: ExpectationPlan = ExpectationPlan::GH_DEFAULT;
const PS: ExpectationPlan = ExpectationPlan::POISSON_DEFAULT;

fn id() -> ScalarField {
    ScalarField::coordinate(1, 0)
}

#[test]
fn gaussian_saturation() {
    for theta in [0.25, 0.5, 1.0] {
        let f = ScalarField::exponential(&[theta], -theta * theta / 2.0);
        let r = verify_gaussian(&PhiFunction::xlogx(), &[0.0], &[1.0], &f, &GH).unwrap();
        let want = theta * theta / 2.0;
        assert!((r.lhs - want).abs() < 1e-8 * want, "{r:?}");
        assert!((0.5 * r.rhs - want).abs() < 1e-8 * want);
        assert!(r.all_pass());
    }
    let r = verify_gaussian(&PhiFunction::square(), &[0.0], &[1.0], &id(), &GH).unwrap();
    assert!((r.lhs - 1.0).abs() < 1e-10 && (r.rhs - 2.0).abs() < 1e-10 && r.deficit.abs() < 1e-10);
    let c = ScalarField::constant(1, 2.0);
    let r = verify_gaussian(&PhiFunction::xlogx(), &[0.0], &[1.0], &c, &GH).unwrap();
    assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
}

#[test]
fn gaussian_sigma_form_is_sharper() {
    let cov = [2.0, 0.6, 0.6, 0.5];
    let f = ScalarField::new("soft", 2, |x| (0.3 * x[0] - 0.2 * x[1]).exp() + 1.0);
    let r = verify_gaussian(&PhiFunction::xlogx(), &[0.1, -0.3], &cov, &f, &GH).unwrap();
    let rho = r.part("rho_form").unwrap();
    assert!(r.deficit <= rho.deficit + 1e-12);
    assert!(r.all_pass());
}

#[test]
fn gaussian_refuses_uncertified() {
    let p4 = PhiFunction::power(4.0).unwrap();
    let f = ScalarField::constant(1, 1.0);
    assert!(matches!(
        verify_gaussian(&p4, &[0.0], &[1.0], &f, &GH),
        Err(Error::HypothesisRefused { .. })
    ));
}

#[test]
fn brownian_examples() {
    let f = ScalarField::coordinate(2, 1);
    let r = verify_brownian_multitime(&PhiFunction::square(), &[1.0, 2.0], &f, &GH).unwrap();
    assert!((r.lhs - 2.0).abs() < 1e-9 && (0.5 * r.rhs - 2.0).abs() < 1e-9);
    assert!(r.pass);

    // Repeated time: F(x₁, x₂) = g(x₂) reduces to the single-time inequality at t = 1.
    let g = ScalarField::new("e^{x2/2}", 2, |x| (x[1] / 2.0).exp());
    let multi = verify_brownian_multitime(&PhiFunction::xlogx(), &[1.0, 1.0], &g, &GH).unwrap();
    let single = verify_gaussian(
        &PhiFunction::xlogx(),
        &[0.0],
        &[1.0],
        &ScalarField::new("e^{x/2}", 1, |x| (x[0] / 2.0).exp()),
        &GH,
    )
    .unwrap();
    assert!((multi.lhs - single.lhs).abs() < 1e-10);
    assert!((multi.rhs - single.rhs).abs() < 1e-8);

    let err = verify_brownian_multitime(&PhiFunction::square(), &[2.0, 1.0], &f, &GH);
    assert!(err.is_err());
}

#[test]
fn poisson_examples() {
    let r = verify_poisson(&PhiFunction::square(), 1.0, &id(), &PS).unwrap();
    assert!((r.lhs - 1.0).abs() < 1e-9 && (r.rhs - 1.0).abs() < 1e-12);
    let f = ScalarField::univariate("e^-k", |k| (-k).exp(), |k| -(-k).exp());
    let r = verify_poisson(&PhiFunction::xlogx(), 2.0, &f, &PS).unwrap();
    assert!(r.pass && r.deficit > 0.0);
    let c = ScalarField::constant(1, 1.5);
    let r = verify_poisson(&PhiFunction::xlogx(), 2.0, &c, &PS).unwrap();
    assert_eq!(r.lhs, 0.0);
    assert!(r.rhs.abs() < 1e-15);
}

#[test]
fn levy_examples() {
    let one = Atoms::dirac(&[1.0]);
    let f = ScalarField::univariate("e^-k", |k| (-k).exp(), |k| -(-k).exp());
    let a = verify_levy(&PhiFunction::xlogx(), 2.0, &one, 1.0, &f, &PS).unwrap();
    let b = verify_poisson(&PhiFunction::xlogx(), 2.0, &f, &PS).unwrap();
    assert!((a.lhs - b.lhs).abs() < 1e-12 && (a.rhs - b.rhs).abs() < 1e-12);

    let walk = Atoms::line(&[1.0, -1.0], &[0.5, 0.5]).unwrap();
    let r = verify_levy(&PhiFunction::square(), 1.0, &walk, 1.0, &id(), &PS).unwrap();
    assert!((r.lhs - 1.0).abs() < 1e-9 && (r.rhs - 1.0).abs() < 1e-12, "{r:?}");
    assert!(r.pass);
}

#[test]
fn compound_poisson_law_moments() {
    let nu = Atoms::line(&[1.0, 2.5], &[0.3, 0.7]).unwrap();
    let law = compound_poisson_atoms(1.7, &nu, 1e-14).unwrap();
    let mean: f64 = (0..law.len()).map(|i| law.weights()[i] * law.point(i)[0]).sum();
    let second: f64 = (0..law.len()).map(|i| law.weights()[i] * law.point(i)[0].powi(2)).sum();
    let ey = 0.3 + 0.7 * 2.5;
    let ey2 = 0.3 + 0.7 * 6.25;
    assert!((mean - 1.7 * ey).abs() < 1e-10);
    assert!((second - mean * mean - 1.7 * ey2).abs() < 1e-9);
}

#[test]
fn levy_multitime_examples() {
    let one = Atoms::dirac(&[1.0]);
    let f = ScalarField::coordinate(2, 1);
    let r = verify_levy_multitime(&PhiFunction::square(), 1.0, &one, &[1.0, 2.0], &f, &PS).unwrap();
    assert!((r.lhs - 2.0).abs() < 1e-9 && (r.rhs - 2.0).abs() < 1e-9, "{r:?}");
    assert!(r.all_pass(), "{r:?}");
    assert!(r.detail("decomposition_gap").unwrap() < 1e-10);

    let g = ScalarField::new("e^{-x1/2}", 2, |x| (-x[0] / 2.0).exp());
    let multi = verify_levy_multitime(&PhiFunction::xlogx(), 1.0, &one, &[0.7, 1.9], &g, &PS).unwrap();
    let single = verify_levy(
        &PhiFunction::xlogx(),
        1.0,
        &one,
        0.7,
        &ScalarField::new("e^{-x/2}", 1, |x| (-x[0] / 2.0).exp()),
        &PS,
    )
    .unwrap();
    assert!((multi.lhs - single.lhs).abs() < 1e-10);
    assert!((multi.rhs - single.constant * single.rhs).abs() < 1e-10);
    assert!(multi.all_pass(), "{multi:?}");

    let h = ScalarField::new("mix", 3, |x| (0.3 * x[0] - 0.2 * x[1] + 0.1 * x[2]).exp());
    let walk = Atoms::line(&[1.0, -1.0], &[0.5, 0.5]).unwrap();
    let r = verify_levy_multitime(&PhiFunction::xlogx(), 0.8, &walk, &[0.5, 1.0, 1.5], &h, &PS).unwrap();
    assert!(r.all_pass(), "{r:?}");

    assert!(verify_levy_multitime(&PhiFunction::square(), 1.0, &one, &[1.0, 2.0, 3.0, 4.0], &ScalarField::constant(4, 1.0), &PS).is_err());
}

#[test]
fn tensorisation_examples() {
    let a = Measure::atoms(&[0.0, 1.0, 3.0], &[0.2, 0.5, 0.3]).unwrap();
    let b = Measure::atoms(&[-1.0, 2.0, 4.0], &[0.4, 0.4, 0.2]).unwrap();
    let plan = ExpectationPlan::ExactAtoms;
    let one_coord = ScalarField::new("g(x)", 2, |x| 1.0 + x[0] * x[0]);
    let r = verify_tensorisation(&PhiFunction::xlogx(), &[a.clone(), b.clone()], &one_coord, &plan).unwrap();
    assert!(r.deficit.abs() < 1e-12 && r.detail("equality") == Some(1.0));

    let additive = ScalarField::new("g+h", 2, |x| x[0].sin() + x[1] * x[1]);
    let r = verify_tensorisation(&PhiFunction::square(), &[a.clone(), b.clone()], &additive, &plan).unwrap();
    assert!(r.deficit.abs() < 1e-12);

    let f = ScalarField::new("f", 2, |x| (0.4 * x[0] * x[1]).exp() + 0.5);
    let r = verify_tensorisation(&PhiFunction::xlogx(), &[a, b], &f, &plan).unwrap();
    assert!(r.pass && r.deficit > 0.0);
}

#[test]
fn tensorisation_gaussian_factors() {
    let f = ScalarField::new("f", 2, |x| (0.3 * x[0] + 0.2 * x[0] * x[1]).cos() + 2.0);
    let r = verify_tensorisation(
        &PhiFunction::power(1.5).unwrap(),
        &[Measure::standard_normal(), Measure::standard_normal()],
        &f,
        &ExpectationPlan::GaussHermite { order: 20 },
    )
    .unwrap();
    assert!(r.pass);
}

#[test]
fn convolution_gaussians_are_sharp() {
    let specs = vec![(Measure::standard_normal(), 0.5), (Measure::standard_normal(), 0.5)];
    let f = ScalarField::exponential(&[0.5], 0.0);
    let r = verify_convolution(&PhiFunction::xlogx(), &specs, &EnergyForm::Diffusion, &f, &GH).unwrap();
    assert_eq!(r.constant, 1.0);
    assert!(r.deficit.abs() < 1e-8 * r.lhs, "{r:?}");
    assert!(r.all_pass());
    let single = verify_convolution(
        &PhiFunction::xlogx(),
        &specs[..1],
        &EnergyForm::Diffusion,
        &f,
        &GH,
    )
    .unwrap();
    let direct = verify_gaussian(&PhiFunction::xlogx(), &[0.0], &[1.0], &f, &GH).unwrap();
    assert!((single.lhs - direct.lhs).abs() < 1e-14);
}

#[test]
fn convolution_with_two_points() {
    let two = Measure::atoms(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
    let sine = ScalarField::univariate("sin", f64::sin, f64::cos);
    let shifts: Vec<Vec<f64>> = linspace(-std::f64::consts::PI, std::f64::consts::PI, 2001)
        .into_iter()
        .map(|a| vec![a])
        .collect();
    let c_atoms = translate_constant(
        &PhiFunction::square(),
        &two,
        &sine,
        &EnergyForm::Diffusion,
        &shifts,
        &ExpectationPlan::ExactAtoms,
    )
    .unwrap();
    assert!((c_atoms - 1f64.tan().powi(2) / 2.0).abs() < 1e-6);
    let specs = vec![(Measure::standard_normal(), 0.5), (two, c_atoms)];
    let r = verify_convolution(&PhiFunction::square(), &specs, &EnergyForm::Diffusion, &sine, &GH).unwrap();
    assert!(r.all_pass() && r.deficit >= 0.0, "{r:?}");
}

#[test]
fn convolution_rejects_jump_form() {
    let specs = vec![(Measure::standard_normal(), 0.5)];
    let form = EnergyForm::Jump {
        nu: Atoms::dirac(&[1.0]),
        rate: 1.0,
    };
    assert!(matches!(
        verify_convolution(&PhiFunction::square(), &specs, &form, &id(), &GH),
        Err(Error::Incompatible(_))
    ));
}

#[test]
fn pushforward_examples() {
    let mu = Measure::standard_normal();
    let f = ScalarField::exponential(&[0.7], 0.0);
    let ident = VectorMap::scalar("x", |x| x);
    let r = verify_pushforward(&PhiFunction::xlogx(), &mu, 0.5, &ident, 1.0, &f, &GH).unwrap();
    let base = verify_gaussian(&PhiFunction::xlogx(), &[0.0], &[1.0], &f, &GH).unwrap();
    assert!((r.deficit - base.deficit).abs() < 1e-12);

    let half = VectorMap::scalar("x/2", |x| x / 2.0);
    let r = verify_pushforward(&PhiFunction::xlogx(), &mu, 0.5, &half, 0.5, &f, &GH).unwrap();
    assert!((r.constant - 0.125).abs() < 1e-15);
    assert!(r.deficit.abs() < 1e-8 * r.lhs);

    let sin = VectorMap::scalar("sin", f64::sin);
    let g = ScalarField::exponential(&[0.1], 0.0);
    let r = verify_pushforward(&PhiFunction::xlogx(), &mu, 0.5, &sin, 1.0, &g, &GH).unwrap();
    assert!(r.pass && r.deficit >= 0.0);

    let err = verify_pushforward(&PhiFunction::xlogx(), &mu, 0.5, &sin, 0.5, &g, &GH);
    assert!(matches!(err, Err(Error::Incompatible(_))));
}

#[test]
fn perturbation_examples() {
    let mu = Measure::standard_normal();
    let f = ScalarField::univariate("sin+x/3", |x| x.sin() + x / 3.0, |x| x.cos() + 1.0 / 3.0);
    let flat = ScalarField::constant(1, 0.4);
    let r = verify_perturbation(&PhiFunction::square(), &mu, 0.5, &EnergyForm::Diffusion, &flat, &f, &GH).unwrap();
    let base = r.part("base").unwrap();
    assert!((r.deficit - base.deficit).abs() < 1e-12);
    assert_eq!(r.detail("oscillation"), Some(0.0));

    let b = ScalarField::sine(0.3, 1.0, 0.0, 0.0);
    let r = verify_perturbation(&PhiFunction::square(), &mu, 0.5, &EnergyForm::Diffusion, &b, &f, &GH).unwrap();
    assert!((r.constant - 0.5 * 1.2f64.exp()).abs() < 1e-12);
    assert!(r.all_pass() && r.deficit >= 0.0, "{r:?}");

    let unbounded = ScalarField::coordinate(1, 0);
    assert!(verify_perturbation(&PhiFunction::square(), &mu, 0.5, &EnergyForm::Diffusion, &unbounded, &f, &GH).is_err());
}

#[test]
fn beckner_examples() {
    let mu = Measure::standard_normal();
    let r = verify_beckner(&mu, 1.0, 1.0, &id(), &GH).unwrap();
    assert!((r.lhs - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-6, "{r:?}");
    assert!((r.rhs - 1.0).abs() < 1e-12 && r.pass);

    let near = verify_beckner(&mu, 1.0, 1.99, &id(), &GH).unwrap();
    assert!(near.lhs < 0.02);

    let f = ScalarField::univariate("1+sin", |x| 1.0 + 0.5 * x.sin(), |x| 0.5 * x.cos());
    let r = verify_beckner_grid(&mu, 1.0, &f, &GH).unwrap();
    assert!(r.all_pass() && r.parts.len() == BECKNER_Q_GRID.len());
    for q in [1.0, 1.25, 1.5, 1.75] {
        let direct = verify_beckner(&mu, 1.0, q, &f, &GH).unwrap();
        let (lhs, rhs) = beckner_via_power(&mu, 1.0, q, &f, &GH).unwrap();
        assert!((lhs - direct.lhs).abs() < 1e-10);
        assert!((rhs - direct.constant * direct.rhs).abs() < 1e-10);
    }
    assert!(verify_beckner(&mu, 2.0, 1.0, &id(), &GH).is_err());
}

#[test]
fn dirichlet_examples() {
    let sq = dirichlet_compare(&PhiFunction::square(), &dirichlet_grid(&PhiFunction::square(), 21)).unwrap();
    assert!(sq.pass);
    for row in &sq.rows {
        assert!((row.second_order - 2.0 * row.v * row.v).abs() < 1e-12);
        assert!((row.increment - 2.0 * row.v * row.v).abs() < 1e-12 * (1.0 + row.v * row.v));
    }
    let x = PhiFunction::xlogx();
    let r = dirichlet_compare(&x, &[(1.0, 1.0), (2.0, 0.0)]).unwrap();
    let row = &r.rows[0];
    assert!((row.psi - (4f64.ln() - 1.0)).abs() < 1e-12);
    assert!((row.second_order - 1.0).abs() < 1e-15 && (row.increment - 2f64.ln()).abs() < 1e-15);
    assert_eq!((r.rows[1].psi, r.rows[1].second_order, r.rows[1].increment), (0.0, 0.0, 0.0));
    assert_eq!(r.second_order_holds, Some(true));
    assert_eq!(r.increment_holds, Some(true));
}

#[test]
fn l1_l2_dichotomy() {
    let c = ScalarField::constant(1, 2.0);
    let r = poisson_l1_lsi(1.0, 1.0, &c, &PS).unwrap();
    assert_eq!(r.lhs, 0.0);
    assert!(r.pass);
    let f = ScalarField::univariate("e^-k", |k| (-k).exp(), |k| -(-k).exp());
    let r = poisson_l1_lsi(1.0, 1.0, &f, &PS).unwrap();
    assert!(r.pass && r.deficit >= 0.0);
    assert!(poisson_l1_lsi(1.0, 1.0, &id(), &PS).is_err());

    let probe = poisson_l2_probe(1.0, &[1.0, 2.0, 3.0, 4.0], &PS).unwrap();
    assert!(probe.strictly_increasing);
    for (a, b) in probe.ratios.iter().zip(&probe.closed_form) {
        assert!((a - b).abs() < 1e-8 * b, "{a} vs {b}");
    }
}

#[test]
fn spec_and_csv() {
    let spec = InequalitySpec::new(
        "gauss-lsi",
        PhiFunction::xlogx(),
        Measure::standard_normal(),
        EnergyForm::Diffusion,
        0.5,
        Some(Hypothesis::H1),
    )
    .unwrap();
    let r = spec.evaluate(&ScalarField::exponential(&[1.0], -0.5), &GH).unwrap();
    assert!(r.deficit.abs() < 1e-8);
    let mc = spec.evaluate(&ScalarField::exponential(&[1.0], -0.5), &ExpectationPlan::monte_carlo(3)).unwrap();
    assert!(mc.std_error.unwrap() > 0.0 && mc.pass);
    let mut buf = Vec::new();
    write_reports_csv(&[r], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("name,lhs,rhs,constant,deficit,pass\ngauss-lsi,"));
    assert!(InequalitySpec::new("bad", PhiFunction::square(), Measure::standard_normal(), EnergyForm::Diffusion, 0.0, None).is_err());
}
