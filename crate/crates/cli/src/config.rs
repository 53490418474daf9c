//! Batch configuration. See `docs/config.md` for the grammar.

use std::path::PathBuf;

use phisob::functionals::EnergyForm;
use phisob::measure::{Atoms, Gaussian};
use phisob::phi::{Hypothesis, PhiSpec};
use phisob::report::Tolerance;
use phisob::verify::InequalitySpec;
use phisob::{ExpectationPlan, Measure, ScalarField};
use serde::Deserialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerance: Option<ToleranceSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, rename = "inequality")]
    pub inequalities: Vec<InequalityEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default = "default_abs")]
    pub abs: f64,
    #[serde(default = "default_rel")]
    pub rel: f64,
}

fn default_abs() -> f64 {
    Tolerance::default().abs
}

fn default_rel() -> f64 {
    Tolerance::default().rel
}

impl ToleranceSpec {
    pub fn tolerance(&self) -> Tolerance {
        Tolerance::new(self.abs, self.rel)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
    /// File stem of the deficit table, `deficits` by default.
    pub name: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalityEntry {
    pub name: String,
    pub phi: PhiSpec,
    pub measure: MeasureSpec,
    #[serde(default)]
    pub form: FormSpec,
    pub constant: f64,
    #[serde(default)]
    pub hypothesis: Option<Hypothesis>,
    #[serde(default)]
    pub plan: Option<ExpectationPlan>,
    #[serde(default)]
    pub functions: Vec<FunctionSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    StandardNormal {
        #[serde(default = "one")]
        dim: usize,
    },
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<f64>,
    },
    Poisson {
        rate: f64,
    },
    Atoms {
        points: Vec<f64>,
        weights: Vec<f64>,
        #[serde(default = "one")]
        dim: usize,
    },
    Product {
        factors: Vec<MeasureSpec>,
    },
    Convolution {
        parts: Vec<MeasureSpec>,
    },
}

fn one() -> usize {
    1
}

impl MeasureSpec {
    pub fn build(&self) -> phisob::Result<Measure> {
        match self {
            MeasureSpec::StandardNormal { dim } if *dim == 0 => Err(phisob::Error::InvalidInput("dimension must be positive".into())),
            MeasureSpec::StandardNormal { dim } => Ok(Measure::Gaussian(Gaussian::standard(*dim))),
            MeasureSpec::Gaussian { mean, cov } => Measure::gaussian(mean.clone(), cov.clone()),
            MeasureSpec::Poisson { rate } => Measure::poisson(*rate),
            MeasureSpec::Atoms { points, weights, dim } => {
                Ok(Measure::Atoms(Atoms::new(*dim, points.clone(), weights.clone())?))
            }
            MeasureSpec::Product { factors } => {
                Measure::product(factors.iter().map(|f| f.build()).collect::<phisob::Result<_>>()?)
            }
            MeasureSpec::Convolution { parts } => {
                Measure::convolution(parts.iter().map(|f| f.build()).collect::<phisob::Result<_>>()?)
            }
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FormSpec {
    #[default]
    Diffusion,
    Covariance {
        s: Vec<f64>,
    },
    MultiTime {
        times: Vec<f64>,
    },
    Jump {
        points: Vec<f64>,
        weights: Vec<f64>,
        rate: f64,
    },
    L1Fisher {
        points: Vec<f64>,
        weights: Vec<f64>,
        rate: f64,
    },
}

impl FormSpec {
    pub fn build(&self) -> phisob::Result<EnergyForm> {
        let form = match self {
            FormSpec::Diffusion => EnergyForm::Diffusion,
            FormSpec::Covariance { s } => EnergyForm::Covariance { s: s.clone() },
            FormSpec::MultiTime { times } => EnergyForm::MultiTime { times: times.clone() },
            FormSpec::Jump { points, weights, rate } => EnergyForm::Jump {
                nu: Atoms::line(points, weights)?,
                rate: *rate,
            },
            FormSpec::L1Fisher { points, weights, rate } => EnergyForm::L1Fisher {
                nu: Atoms::line(points, weights)?,
                rate: *rate,
            },
        };
        form.validate()?;
        Ok(form)
    }
}

/// Named test-function families.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    /// exp(⟨θ, x⟩ + shift)
    Exponential {
        theta: Vec<f64>,
        #[serde(default)]
        shift: f64,
    },
    /// ⟨a, x⟩ + intercept
    Linear {
        coeffs: Vec<f64>,
        #[serde(default)]
        intercept: f64,
    },
    /// offset + amplitude·sin(frequency·x + phase), one-dimensional
    Trigonometric {
        #[serde(default = "unit")]
        amplitude: f64,
        #[serde(default = "unit")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// values on 0, 1, …, n − 1
    Tabulated {
        values: Vec<f64>,
    },
}

fn unit() -> f64 {
    1.0
}

impl FunctionSpec {
    pub fn build(&self) -> phisob::Result<ScalarField> {
        let bad = |m: &str| phisob::Error::InvalidInput(m.to_string());
        match self {
            FunctionSpec::Exponential { theta, shift } => {
                if theta.is_empty() {
                    return Err(bad("exponential: theta is empty"));
                }
                Ok(ScalarField::exponential(theta, *shift))
            }
            FunctionSpec::Linear { coeffs, intercept } => {
                if coeffs.is_empty() {
                    return Err(bad("linear: coeffs is empty"));
                }
                Ok(ScalarField::linear(coeffs, *intercept))
            }
            FunctionSpec::Trigonometric {
                amplitude,
                frequency,
                phase,
                offset,
            } => Ok(ScalarField::sine(*amplitude, *frequency, *phase, *offset)),
            FunctionSpec::Tabulated { values } => {
                if values.is_empty() {
                    return Err(bad("tabulated: values is empty"));
                }
                Ok(ScalarField::tabulated(values))
            }
        }
    }
}

/// A parsed entry with every object built.
pub struct Prepared {
    pub name: String,
    pub spec: InequalitySpec,
    pub plan: ExpectationPlan,
    pub functions: Vec<ScalarField>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Build every entry. Malformed objects are reported against their entry
    /// and field. Hypotheses are certified later, at evaluation.
    pub fn prepare(&self, seed: u64) -> Result<Vec<Prepared>, String> {
        let mut out = Vec::with_capacity(self.inequalities.len());
        for (i, e) in self.inequalities.iter().enumerate() {
            let at = |field: &str, err: phisob::Error| format!("inequality[{i}] `{}`, field `{field}`: {err}", e.name);
            let phi = e.phi.build().map_err(|err| at("phi", err))?;
            let mu = e.measure.build().map_err(|err| at("measure", err))?;
            let form = e.form.build().map_err(|err| at("form", err))?;
            let plan = match &e.plan {
                Some(ExpectationPlan::MonteCarlo { n, seed: local }) => ExpectationPlan::MonteCarlo {
                    n: *n,
                    seed: derive_seed(seed, i as u64, *local),
                },
                Some(p) => p.clone(),
                None => ExpectationPlan::default_for(&mu),
            };
            let mut functions = Vec::with_capacity(e.functions.len());
            for (j, f) in e.functions.iter().enumerate() {
                let field = f.build().map_err(|err| at(&format!("functions[{j}]"), err))?;
                functions.push(field);
            }
            let spec = InequalitySpec::new(e.name.clone(), phi, mu, form, e.constant, e.hypothesis)
                .map_err(|err| at("constant", err))?;
            out.push(Prepared {
                name: e.name.clone(),
                spec,
                plan,
                functions,
            });
        }
        Ok(out)
    }
}

/// SplitMix64 mix of the master seed with an entry index and a local seed.
pub fn derive_seed(master: u64, index: u64, local: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ local.rotate_left(32);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
