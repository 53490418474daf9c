mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use phisob::numeric::linspace;
use phisob::phi::Hypothesis;
use phisob::semigroup::Semigroup;

use commands::{Context, Failure, GridArgs, MeasureArgs, TailArgs};
use config::Format;

#[derive(Parser)]
#[command(name = "phisob", version, about = "Φ-entropies and Φ-Sobolev inequalities, checked numerically")]
struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Absolute tolerance on deficits.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Write artifacts here instead of stdout.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check (H1), (H2) and (H2') for a Φ on a grid.
    CheckPhi(CheckPhiArgs),
    /// Ent_μ^Φ(f) for a one-dimensional law and test function.
    Entropy(EntropyArgs),
    /// Evaluate every inequality in a config file.
    Verify {
        config: PathBuf,
    },
    /// Entropy decay along a semigroup.
    Decay(DecayArgs),
    /// Monte Carlo tails against concentration bounds.
    Tail(TailCmdArgs),
    /// Maximum Φ-entropy density under E W = c.
    Maxent(MaxentArgs),
}

#[derive(Args)]
struct PhiArgs {
    /// xlogx, power, square or quadratic.
    #[arg(long)]
    phi: Option<String>,
    /// Exponent for `power`.
    #[arg(long)]
    p: Option<f64>,
    /// Inline TOML table, e.g. '{ kind = "quadratic", a = 1.0, b = 0.5 }'.
    #[arg(long)]
    phi_spec: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum HypArg {
    H1,
    H2,
    H2prime,
}

impl From<HypArg> for Hypothesis {
    fn from(h: HypArg) -> Self {
        match h {
            HypArg::H1 => Hypothesis::H1,
            HypArg::H2 => Hypothesis::H2,
            HypArg::H2prime => Hypothesis::H2Prime,
        }
    }
}

#[derive(Args)]
struct CheckPhiArgs {
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    /// Inline TOML table describing Φ.
    #[arg(long)]
    spec: Option<String>,
    /// Hypotheses to check; all three by default.
    #[arg(long = "hypothesis", value_enum, value_delimiter = ',')]
    hypotheses: Vec<HypArg>,
    #[arg(long)]
    lo: Option<f64>,
    #[arg(long)]
    hi: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// Linear instead of log spacing.
    #[arg(long)]
    linear: bool,
}

#[derive(Args)]
struct FunctionArgs {
    /// identity, linear, square, abs, exponential, trigonometric or tabulated.
    #[arg(long = "f", default_value = "linear")]
    name: String,
    /// Slope, rate or frequency of the family.
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
}

#[derive(Args)]
struct MeasureFlags {
    /// normal, poisson or atoms.
    #[arg(long, default_value = "normal")]
    measure: String,
    #[arg(long, default_value_t = 0.0)]
    mean: f64,
    #[arg(long, default_value_t = 1.0)]
    var: f64,
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    #[arg(long, value_delimiter = ',')]
    points: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
}

impl MeasureFlags {
    fn args(&self) -> MeasureArgs<'_> {
        MeasureArgs {
            kind: &self.measure,
            mean: self.mean,
            var: self.var,
            rate: self.rate,
            points: self.points.as_deref(),
            weights: self.weights.as_deref(),
        }
    }
}

#[derive(Args)]
struct EntropyArgs {
    #[command(flatten)]
    phi: PhiArgs,
    #[command(flatten)]
    measure: MeasureFlags,
    #[command(flatten)]
    f: FunctionArgs,
    /// Use Monte Carlo with this many samples.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SgKind {
    Ou,
    Heat,
    Poisson,
}

#[derive(Args)]
struct DecayArgs {
    #[arg(long, value_enum, default_value = "ou")]
    sg: SgKind,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    #[command(flatten)]
    phi: PhiArgs,
    #[command(flatten)]
    f: FunctionArgs,
    #[arg(long, default_value_t = 2.0)]
    t_max: f64,
    #[arg(long, default_value_t = 21)]
    steps: usize,
}

#[derive(Args)]
struct TailCmdArgs {
    /// Constant of the log-Sobolev (or Beckner-type) inequality.
    #[arg(long)]
    c: f64,
    /// Exponent a of the Beckner-type family; omit for the Gaussian Herbst bound.
    #[arg(long)]
    a: Option<f64>,
    /// Statistic: identity, linear, abs, trigonometric.
    #[arg(long = "F", default_value = "identity")]
    statistic: String,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[command(flatten)]
    measure: MeasureFlags,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Args)]
struct MaxentArgs {
    #[command(flatten)]
    phi: PhiArgs,
    /// Constraint statistic: square, identity, abs.
    #[arg(long = "W", default_value = "square")]
    w: String,
    #[arg(long)]
    c: f64,
    #[arg(long, default_value_t = -12.0, allow_hyphen_values = true)]
    lo: f64,
    #[arg(long, default_value_t = 12.0)]
    hi: f64,
    #[arg(long, default_value_t = 4801)]
    n: usize,
}

fn phi_of(a: &PhiArgs, default: &str) -> Result<phisob::phi::PhiFunction, Failure> {
    match (&a.phi, &a.phi_spec) {
        (None, None) => commands::phi_from(Some(default), a.p, None),
        (kind, spec) => commands::phi_from(kind.as_deref(), a.p, spec.as_deref()),
    }
}

fn field_of(a: &FunctionArgs) -> Result<phisob::ScalarField, Failure> {
    commands::field_from(&a.name, a.theta, a.values.as_deref())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("PHISOB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Parse(format!("PHISOB_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn run(cli: Cli) -> Result<bool, Failure> {
    configure_threads()?;
    if let Some(t) = cli.tol {
        if !(t >= 0.0) {
            return Err(Failure::Parse("--tol must be non-negative".into()));
        }
    }
    let ctx = Context {
        seed: cli.seed,
        tol: cli.tol,
        out_dir: cli.out_dir,
        format: cli.format,
    };
    match cli.command {
        Command::CheckPhi(a) => {
            let phi = commands::phi_from(a.kind.as_deref(), a.p, a.spec.as_deref())?;
            let hyps: Vec<Hypothesis> = if a.hypotheses.is_empty() {
                vec![Hypothesis::H1, Hypothesis::H2, Hypothesis::H2Prime]
            } else {
                a.hypotheses.iter().map(|h| (*h).into()).collect()
            };
            let grid = GridArgs {
                lo: a.lo,
                hi: a.hi,
                n: a.n,
                linear: a.linear,
            };
            commands::check_phi(&ctx, &phi, &hyps, &grid)
        }
        Command::Entropy(a) => {
            let phi = phi_of(&a.phi, "xlogx")?;
            let mu = commands::measure_from(&a.measure.args())?;
            let f = field_of(&a.f)?;
            commands::entropy(&ctx, &phi, &mu, &f, a.samples)
        }
        Command::Verify { config } => commands::verify(&ctx, &config),
        Command::Decay(a) => {
            let sg = match a.sg {
                SgKind::Ou => Semigroup::Ou { rho: a.rho },
                SgKind::Heat => Semigroup::Heat { dim: 1 },
                SgKind::Poisson => Semigroup::Poisson { rate: a.rate },
            };
            let phi = phi_of(&a.phi, "square")?;
            let f = field_of(&a.f)?;
            commands::decay(&ctx, &sg, &phi, &f, a.t_max, a.steps)
        }
        Command::Tail(a) => {
            let mu = commands::measure_from(&a.measure.args())?;
            let f = commands::field_from(&a.statistic, a.theta, None)?;
            commands::tail(
                &ctx,
                &TailArgs {
                    c: a.c,
                    a: a.a,
                    f: &f,
                    mu: &mu,
                    samples: a.samples,
                    t_max: a.t_max,
                    step: a.step,
                },
            )
        }
        Command::Maxent(a) => {
            let phi = phi_of(&a.phi, "xlogx")?;
            let w = commands::field_from(&a.w, 1.0, None)?;
            if !(a.lo < a.hi) || a.n < 3 {
                return Err(Failure::Parse("need --lo < --hi and --n ≥ 3".into()));
            }
            commands::maxent(&ctx, phi, w, a.c, linspace(a.lo, a.hi, a.n))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.message().trim_end());
            ExitCode::from(f.code() as u8)
        }
    }
}
