use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use phisob::concentration::{beckner_tail, default_t_grid, herbst_gaussian_tail, TailReport, DEFAULT_SAMPLES};
use phisob::functionals::phi_entropy;
use phisob::maxent::{solve_maxent, MaxentProblem};
use phisob::numeric::linspace;
use phisob::phi::{
    certify, check_default, check_h1, check_h2, check_h2prime, ConditionReport, Hypothesis, IntervalGrid, PhiFunction,
    PhiSpec,
};
use phisob::report::{DeficitReport, Tolerance};
use phisob::semigroup::{decay_rate, Semigroup};
use phisob::{Error, ExpectationPlan, Measure, ScalarField};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Format, RunConfig};

/// Exit-code classes: a verdict of failure or refusal (1), unusable input
/// (2) and an evaluation error (3).
#[derive(Debug)]
pub enum Failure {
    Refused(String),
    Parse(String),
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Refused(_) => 1,
            Failure::Parse(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Refused(m) | Failure::Parse(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::HypothesisRefused { .. } => Failure::Refused(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

pub type Outcome = Result<bool, Failure>;

/// Global flags.
pub struct Context {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
}

struct Artifact {
    stem: String,
    csv: Vec<u8>,
    json: serde_json::Value,
}

impl Artifact {
    fn new<T: Serialize>(stem: &str, value: &T, csv: impl FnOnce(&mut Vec<u8>) -> phisob::Result<()>) -> Result<Self, Failure> {
        let mut buf = Vec::new();
        csv(&mut buf)?;
        Ok(Artifact {
            stem: stem.to_string(),
            csv: buf,
            json: serde_json::to_value(value).map_err(|e| Failure::Runtime(e.to_string()))?,
        })
    }

    fn bytes(&self, format: Format) -> Vec<u8> {
        match format {
            Format::Csv => self.csv.clone(),
            Format::Json => {
                let mut s = serde_json::to_vec_pretty(&self.json).expect("JSON values serialize");
                s.push(b'\n');
                s
            }
        }
    }
}

/// With an output directory every artifact is written there and the
/// summary goes to stdout; otherwise the first artifact goes to stdout and
/// the summary to stderr.
fn emit(dir: Option<&Path>, format: Format, artifacts: &[Artifact], summary: &str) -> Result<(), Failure> {
    match dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
            for a in artifacts {
                let ext = match format {
                    Format::Csv => "csv",
                    Format::Json => "json",
                };
                let path = dir.join(format!("{}.{ext}", a.stem));
                fs::write(&path, a.bytes(format)).map_err(|e| io(&path, e))?;
            }
            println!("{summary}");
        }
        None => {
            if let Some(first) = artifacts.first() {
                std::io::stdout()
                    .write_all(&first.bytes(format))
                    .map_err(|e| Failure::Runtime(e.to_string()))?;
            }
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e)
}

/// Φ from a kind name and exponent, or from an inline TOML table.
pub fn phi_from(kind: Option<&str>, p: Option<f64>, spec: Option<&str>) -> Result<PhiFunction, Failure> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Wrap {
        phi: PhiSpec,
    }
    let parsed: PhiSpec = match (spec, kind) {
        (Some(s), None) => {
            let s = s.trim();
            let text = if s.starts_with('{') { format!("phi = {s}") } else { format!("[phi]\n{s}") };
            toml::from_str::<Wrap>(&text).map_err(|e| Failure::Parse(format!("phi spec: {e}")))?.phi
        }
        (None, Some(k)) => {
            let mut t = toml::Table::new();
            t.insert("kind".into(), toml::Value::String(k.to_string()));
            if let Some(p) = p {
                t.insert("p".into(), toml::Value::Float(p));
            }
            toml::Value::Table(t)
                .try_into::<PhiSpec>()
                .map_err(|e| Failure::Parse(format!("phi: {e}")))?
        }
        (Some(_), Some(_)) => return Err(Failure::Parse("give either a phi kind or a phi spec, not both".into())),
        (None, None) => return Err(Failure::Parse("no phi given".into())),
    };
    parsed.build().map_err(|e| Failure::Parse(e.to_string()))
}

/// One-dimensional test functions by name.
pub fn field_from(name: &str, theta: f64, values: Option<&[f64]>) -> Result<ScalarField, Failure> {
    Ok(match name {
        "identity" => ScalarField::coordinate(1, 0),
        "linear" => ScalarField::linear(&[theta], 0.0),
        "square" => ScalarField::univariate("x^2", |x| x * x, |x| 2.0 * x),
        "abs" => ScalarField::univariate("|x|", f64::abs, f64::signum),
        "exponential" => ScalarField::exponential(&[theta], 0.0),
        "trigonometric" | "sine" => ScalarField::sine(1.0, theta, 0.0, 0.0),
        "tabulated" => match values {
            Some(v) if !v.is_empty() => ScalarField::tabulated(v),
            _ => return Err(Failure::Parse("tabulated function needs --values".into())),
        },
        other => return Err(Failure::Parse(format!("unknown function `{other}`"))),
    })
}

pub struct MeasureArgs<'a> {
    pub kind: &'a str,
    pub mean: f64,
    pub var: f64,
    pub rate: f64,
    pub points: Option<&'a [f64]>,
    pub weights: Option<&'a [f64]>,
}

pub fn measure_from(m: &MeasureArgs) -> Result<Measure, Failure> {
    let built = match m.kind {
        "normal" | "gaussian" => Measure::gaussian(vec![m.mean], vec![m.var]),
        "poisson" => Measure::poisson(m.rate),
        "atoms" => match (m.points, m.weights) {
            (Some(p), Some(w)) => Measure::atoms(p, w),
            (Some(p), None) => Measure::atoms(p, &vec![1.0 / p.len() as f64; p.len()]),
            _ => return Err(Failure::Parse("atoms measure needs --points".into())),
        },
        other => return Err(Failure::Parse(format!("unknown measure `{other}`"))),
    };
    built.map_err(|e| Failure::Parse(e.to_string()))
}

pub struct GridArgs {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub n: Option<usize>,
    pub linear: bool,
}

pub fn check_phi(ctx: &Context, phi: &PhiFunction, hypotheses: &[Hypothesis], grid: &GridArgs) -> Outcome {
    let custom = if grid.lo.is_some() || grid.hi.is_some() || grid.n.is_some() || grid.linear {
        let base = IntervalGrid::default_for(phi.interval());
        let g = IntervalGrid::new(
            grid.lo.unwrap_or(base.lo),
            grid.hi.unwrap_or(base.hi),
            grid.n.unwrap_or(base.n),
            !grid.linear && base.log_scaled,
        )
        .map_err(|e| Failure::Parse(e.to_string()))?;
        Some(g)
    } else {
        None
    };
    let mut reports: Vec<ConditionReport> = Vec::new();
    for h in hypotheses {
        let r = match &custom {
            None => check_default(phi, *h)?,
            Some(g) => match h {
                Hypothesis::H1 => check_h1(phi, g)?,
                Hypothesis::H2 => check_h2(phi, g, g)?,
                Hypothesis::H2Prime => check_h2prime(phi, g)?,
            },
        };
        reports.push(r);
    }
    let artifact = Artifact::new("check_phi", &reports, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["hypothesis", "phi", "holds", "margin", "witness", "inconsistency"])
            .map_err(csv_err)?;
        for r in &reports {
            let witness: Vec<String> = r.witness.iter().map(|x| x.to_string()).collect();
            w.write_record([
                r.hypothesis.to_string(),
                r.phi.clone(),
                r.holds.to_string(),
                r.margin.to_string(),
                witness.join(";"),
                r.inconsistency.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    })?;
    let verdicts: Vec<String> = reports
        .iter()
        .map(|r| format!("{} {}", r.hypothesis, if r.holds { "holds" } else { "fails" }))
        .collect();
    let summary = format!("{}: {}", phi.name(), verdicts.join(", "));
    emit(ctx.out_dir.as_deref(), ctx.format.unwrap_or(Format::Csv), &[artifact], &summary)?;
    Ok(reports.iter().all(|r| r.holds))
}

#[derive(Serialize)]
struct EntropyRow {
    phi: String,
    measure: String,
    function: String,
    plan: String,
    value: f64,
    clamped: bool,
    std_error: Option<f64>,
}

pub fn entropy(ctx: &Context, phi: &PhiFunction, mu: &Measure, f: &ScalarField, samples: Option<usize>) -> Outcome {
    let plan = match samples {
        Some(n) => ExpectationPlan::MonteCarlo {
            n,
            seed: ctx.seed.unwrap_or(0),
        },
        None => ExpectationPlan::default_for(mu),
    };
    let v = phi_entropy(phi, mu, f, &plan)?;
    let row = EntropyRow {
        phi: phi.name().to_string(),
        measure: mu.describe(),
        function: f.name().to_string(),
        plan: plan.to_string(),
        value: v.value,
        clamped: v.clamped,
        std_error: v.std_error,
    };
    let artifact = Artifact::new("entropy", &row, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.serialize(&row).map_err(csv_err)?;
        w.flush()?;
        Ok(())
    })?;
    let summary = format!("Ent = {}", v.value);
    emit(ctx.out_dir.as_deref(), ctx.format.unwrap_or(Format::Csv), &[artifact], &summary)?;
    Ok(true)
}

#[derive(Serialize)]
struct DeficitRow {
    inequality: String,
    function: String,
    plan: String,
    lhs: Option<f64>,
    rhs: Option<f64>,
    constant: f64,
    deficit: Option<f64>,
    tolerance: Option<f64>,
    std_error: Option<f64>,
    pass: bool,
    status: &'static str,
    note: String,
}

impl DeficitRow {
    fn from_report(r: &DeficitReport) -> Self {
        DeficitRow {
            inequality: r.name.clone(),
            function: r.f_description.clone(),
            plan: r.plan.clone(),
            lhs: Some(r.lhs),
            rhs: Some(r.rhs),
            constant: r.constant,
            deficit: Some(r.deficit),
            tolerance: Some(r.tolerance),
            std_error: r.std_error,
            pass: r.pass,
            status: if r.pass { "pass" } else { "fail" },
            note: r.notes.join("; "),
        }
    }
}

pub fn verify(ctx: &Context, path: &Path) -> Outcome {
    let text = fs::read_to_string(path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
    let cfg = RunConfig::parse(&text).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
    let seed = ctx.seed.unwrap_or(cfg.seed);
    let tol = match (ctx.tol, &cfg.tolerance) {
        (Some(abs), _) => Tolerance::new(abs, Tolerance::default().rel),
        (None, Some(t)) => t.tolerance(),
        (None, None) => Tolerance::default(),
    };
    let prepared = cfg
        .prepare(seed)
        .map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;

    let results: Vec<Vec<Result<DeficitRow, String>>> = prepared
        .par_iter()
        .map(|p| {
            if let Some(h) = p.spec.hypothesis {
                if let Err(e) = certify(&p.spec.phi, h) {
                    return vec![match e {
                        Error::HypothesisRefused { .. } => Ok(DeficitRow {
                            inequality: p.name.clone(),
                            function: String::new(),
                            plan: p.plan.to_string(),
                            lhs: None,
                            rhs: None,
                            constant: p.spec.constant,
                            deficit: None,
                            tolerance: None,
                            std_error: None,
                            pass: false,
                            status: "refused",
                            note: e.to_string(),
                        }),
                        other => Err(format!("inequality `{}`: {other}", p.name)),
                    }];
                }
            }
            p.functions
                .iter()
                .map(|f| match p.spec.evaluate(f, &p.plan) {
                    Ok(mut r) => {
                        r.rejudge(&tol);
                        Ok(DeficitRow::from_report(&r))
                    }
                    Err(e) => Err(format!("inequality `{}`, function `{}`: {e}", p.name, f.name())),
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    for r in results.into_iter().flatten() {
        rows.push(r.map_err(Failure::Runtime)?);
    }
    let stem = cfg.output.name.clone().unwrap_or_else(|| "deficits".into());
    let artifact = Artifact::new(&stem, &rows, |buf| {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(buf);
        w.write_record([
            "inequality", "function", "plan", "lhs", "rhs", "constant", "deficit", "tolerance", "std_error", "pass",
            "status", "note",
        ])
        .map_err(csv_err)?;
        for r in &rows {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    })?;
    let passed = rows.iter().filter(|r| r.pass).count();
    let refused = rows.iter().filter(|r| r.status == "refused").count();
    let summary = format!(
        "{} rows: {passed} pass, {} fail, {refused} refused",
        rows.len(),
        rows.len() - passed - refused
    );
    let dir = ctx.out_dir.clone().or(cfg.output.dir.clone());
    let format = ctx.format.or(cfg.output.format).unwrap_or(Format::Csv);
    emit(dir.as_deref(), format, &[artifact], &summary)?;
    Ok(passed == rows.len())
}

pub fn decay(ctx: &Context, sg: &Semigroup, phi: &PhiFunction, f: &ScalarField, t_max: f64, steps: usize) -> Outcome {
    sg.validate().map_err(|e| Failure::Parse(e.to_string()))?;
    if !(t_max > 0.0) || steps < 2 {
        return Err(Failure::Parse("need --t-max > 0 and --steps ≥ 2".into()));
    }
    let times = linspace(0.0, t_max, steps);
    let plan = sg.default_plan();
    let trace = decay_rate(sg, phi, f, &times, &plan, &plan)?;
    let artifact = Artifact::new("decay", &trace, |buf| trace.write_csv(buf))?;
    let rate = trace
        .fitted_rate
        .map(|r| format!("{r:.6}"))
        .unwrap_or_else(|| "none (degenerate trace)".into());
    let summary = format!(
        "{}: fitted rate {rate}, monotone {}, under envelope {}",
        trace.semigroup, trace.monotone, trace.under_envelope
    );
    emit(ctx.out_dir.as_deref(), ctx.format.unwrap_or(Format::Csv), &[artifact], &summary)?;
    Ok(trace.monotone && trace.under_envelope)
}

pub struct TailArgs<'a> {
    pub c: f64,
    pub a: Option<f64>,
    pub f: &'a ScalarField,
    pub mu: &'a Measure,
    pub samples: Option<usize>,
    pub t_max: Option<f64>,
    pub step: Option<f64>,
}

pub fn tail(ctx: &Context, args: &TailArgs) -> Outcome {
    let t_grid = match (args.t_max, args.step) {
        (None, None) => default_t_grid(),
        (t_max, step) => {
            let (t_max, step) = (t_max.unwrap_or(4.0), step.unwrap_or(0.25));
            if !(t_max > 0.0) || !(step > 0.0) {
                return Err(Failure::Parse("need --t-max > 0 and --step > 0".into()));
            }
            let n = (t_max / step).round() as usize;
            (0..=n).map(|i| i as f64 * step).collect()
        }
    };
    let n = args.samples.unwrap_or(DEFAULT_SAMPLES);
    let seed = ctx.seed.unwrap_or(0);
    let report: TailReport = match args.a {
        None => herbst_gaussian_tail(args.c, args.f, args.mu, &t_grid, n, seed)?,
        Some(a) => beckner_tail(args.c, a, args.f, args.mu, &t_grid, n, seed)?,
    };
    let artifact = Artifact::new("tail", &report, |buf| report.write_csv(buf))?;
    let pass = match args.a {
        None => report.dominated,
        Some(_) => !report.degenerate,
    };
    let summary = match (&report.fit, args.a) {
        (Some(fit), Some(_)) => format!(
            "{} regime, r = {}, fitted r = {:.3} (band {:.3}..{:.3})",
            report.regime, report.r, fit.r_hat, fit.r_band.0, fit.r_band.1
        ),
        _ => format!("bound dominates empirical tail: {}", report.dominated),
    };
    emit(ctx.out_dir.as_deref(), ctx.format.unwrap_or(Format::Csv), &[artifact], &summary)?;
    Ok(pass)
}

pub fn maxent(ctx: &Context, phi: PhiFunction, w: ScalarField, c: f64, grid: Vec<f64>) -> Outcome {
    let sol = solve_maxent(&MaxentProblem { phi, w, c, grid })?;
    let density = Artifact::new("maxent", &sol, |buf| sol.write_csv(buf))?;
    let summary = format!(
        "λ = {:.9}, β = {:.9}, mass {:.12}, E(W) {:.9}, clipped {}",
        sol.lambda, sol.beta, sol.mass, sol.moment, sol.clipped
    );
    let dir = ctx.out_dir.as_deref();
    emit(dir, ctx.format.unwrap_or(Format::Csv), &[density], &summary)?;
    if let Some(dir) = dir {
        let path = dir.join("maxent_trace.json");
        let mut text = serde_json::to_vec_pretty(&sol.trace).map_err(|e| Failure::Runtime(e.to_string()))?;
        text.push(b'\n');
        fs::write(&path, text).map_err(|e| io(&path, e))?;
    }
    Ok(true)
}
