use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cncbf::commands::{self, BenchOptions, FilterKnobs, ScenarioFile, SimulateOptions, SliceOptions, SliceSource, SolveOptions, TrainOptions};
use cncbf::error::{exit, CliError, CliResult};
use cncbf::oracle::{self, OracleOptions, Suite};
use cncbf_core::dynamics::Profile;
use cncbf_core::grid::DIMS;
use cncbf_core::hj::{Dissipation, SolverConfig};
use cncbf_core::sim::{Method, SimConfig};
use cncbf_core::train::TrainConfig;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "cncbf", version, about = "Composite neural CBF pipeline: HJ solve, residual training, safety-filtered crowd simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the reach-avoid game on a grid and write the value field.
    Solve(SolveArgs),
    /// Fit the residual network to a solved value field.
    Train(TrainArgs),
    /// Describe a value field and/or weight file.
    Inspect(InspectArgs),
    /// Export a 2D slice with its zero contour as CSV and SVG.
    Slice(SliceArgs),
    /// Run one episode and log its trajectory.
    Simulate(SimulateArgs),
    /// Run the scenario matrix and write the report.
    Bench(BenchArgs),
    /// Run oracle suites and report pass/fail.
    Oracle(OracleArgs),
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    Profile::from_name(s).ok_or_else(|| format!("unknown profile '{s}' (ground|quad)"))
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::from_name(s).ok_or_else(|| format!("unknown method '{s}' (filtered|nominal)"))
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    Suite::from_name(s).ok_or_else(|| format!("unknown suite '{s}' (dp|grad|qp|aggregate)"))
}

fn parse_grid(s: &str) -> Result<[usize; DIMS], String> {
    let v: Vec<usize> = s.split(',').map(|p| p.trim().parse::<usize>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    match v.as_slice() {
        [n] => Ok([*n; DIMS]),
        [a, b, c, d] => Ok([*a, *b, *c, *d]),
        _ => Err("--grid takes one count or four comma-separated counts".into()),
    }
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> Result<[T; 2], String>
where
    T::Err: std::fmt::Display,
{
    let v: Vec<T> = s.split(',').map(|p| p.trim().parse::<T>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    match <[T; 2]>::try_from(v) {
        Ok(p) => Ok(p),
        Err(_) => Err("expected two comma-separated values".into()),
    }
}

#[derive(Args)]
struct ComplianceArgs {
    /// Pedestrians respect the turn-rate bound of the game (default).
    #[arg(long, conflicts_with = "noncompliant")]
    compliant: bool,
    /// Pedestrians may turn at twice the bound.
    #[arg(long)]
    noncompliant: bool,
}

impl ComplianceArgs {
    fn compliant(&self) -> bool {
        !self.noncompliant
    }
}

#[derive(Args)]
struct FilterArgs {
    /// Class-K gain of the barrier condition.
    #[arg(long, default_value_t = FilterKnobs::default().k)]
    k: f64,
    /// Sharpness of the log-sum-exp composition.
    #[arg(long, default_value_t = FilterKnobs::default().beta)]
    beta: f64,
}

impl FilterArgs {
    fn knobs(&self) -> FilterKnobs {
        FilterKnobs { k: self.k, beta: self.beta }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_parser = parse_profile, default_value = "ground")]
    profile: Profile,
    /// Node counts, one for all axes or four comma-separated.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<[usize; DIMS]>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Backward horizon cap in seconds.
    #[arg(long, default_value_t = SolverConfig::default().max_horizon)]
    max_horizon: f64,
    /// Convergence tolerance on the nodewise change per check window.
    #[arg(long, default_value_t = SolverConfig::default().convergence_tol)]
    tol: f64,
    /// Use grid-wide instead of per-node dissipation coefficients.
    #[arg(long)]
    global_dissipation: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Value field written by `solve`.
    #[arg(long)]
    field: PathBuf,
    /// Expected profile; refused when it disagrees with the field.
    #[arg(long, value_parser = parse_profile)]
    profile: Option<Profile>,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of grid nodes used as the dataset.
    #[arg(long, default_value_t = 1.0)]
    subsample: f64,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Args)]
struct SliceArgs {
    #[arg(long, conflicts_with = "field", required_unless_present = "field")]
    weights: Option<PathBuf>,
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long, value_parser = parse_profile)]
    profile: Option<Profile>,
    /// The two free dimensions.
    #[arg(long, value_parser = parse_pair::<usize>, default_value = "0,1")]
    free: [usize; 2],
    /// Values of the other two dimensions, in index order.
    #[arg(long, value_parser = parse_pair::<f64>, allow_hyphen_values = true)]
    fixed: Option<[f64; 2]>,
    #[arg(long, value_parser = parse_pair::<f64>, allow_hyphen_values = true)]
    lower: Option<[f64; 2]>,
    #[arg(long, value_parser = parse_pair::<f64>, allow_hyphen_values = true)]
    upper: Option<[f64; 2]>,
    #[arg(long, value_parser = parse_pair::<usize>, default_value = "201,201")]
    resolution: [usize; 2],
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON; overrides --seed, --m, --profile and the compliance flags.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_parser = parse_profile, default_value = "ground")]
    profile: Profile,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of pedestrians.
    #[arg(long, default_value_t = 5)]
    m: usize,
    #[arg(long, value_parser = parse_method, default_value = "filtered")]
    method: Method,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[command(flatten)]
    compliance: ComplianceArgs,
    #[command(flatten)]
    filter: FilterArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_parser = parse_profile, default_value = "ground")]
    profile: Profile,
    #[arg(long, value_delimiter = ',', default_value = "5,10,15")]
    m_list: Vec<usize>,
    /// Scenarios per cell.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, value_parser = parse_method, value_delimiter = ',', default_value = "filtered,nominal")]
    method: Vec<Method>,
    /// Seed of the first scenario; scenario i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[command(flatten)]
    compliance: ComplianceArgs,
    #[command(flatten)]
    filter: FilterArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    /// Suites to run: dp, grad, qp, aggregate.
    #[arg(long, value_parser = parse_suite, value_delimiter = ',', num_args = 0.., default_value = "dp,grad,qp,aggregate")]
    suite: Vec<Suite>,
    /// Restrict profile-specific suites to one profile.
    #[arg(long, value_parser = parse_profile)]
    profile: Option<Profile>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draws per randomized check.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Trained weights to check instead of seeded parameters.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 4.0)]
    beta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Writes to stdout, ignoring a closed pipe so `cncbf ... | head` exits cleanly.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_json<T: Serialize>(value: &T) {
    emit(&format!("{}\n", serde_json::to_string_pretty(value).expect("summary serializes")));
}

fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Solve(a) => {
            let solver = SolverConfig {
                max_horizon: a.max_horizon,
                convergence_tol: a.tol,
                dissipation: if a.global_dissipation { Dissipation::Global } else { Dissipation::Local },
                ..Default::default()
            };
            let opts = SolveOptions { profile: a.profile, grid: a.grid, solver, seed: a.seed, out: a.out };
            let summary = commands::cmd_solve(&opts, |step, residual| eprintln!("step {step}: residual {residual:.3e}"))?;
            print_json(&summary);
        }
        Command::Train(a) => {
            let config = TrainConfig { epochs: a.epochs, seed: a.seed, learning_rate: a.lr, batch_size: a.batch, ..Default::default() };
            let opts = TrainOptions { field: a.field, profile: a.profile, config, subsample: a.subsample, out: a.out };
            let summary = commands::cmd_train(&opts, |epoch, train, val| {
                if epoch % 10 == 0 {
                    eprintln!("epoch {epoch}: train mse {train:.3e}, validation mse {val:.3e}");
                }
            })?;
            eprintln!("parameters: {}", summary.parameter_count);
            print_json(&summary);
        }
        Command::Inspect(a) => print_json(&commands::cmd_inspect(a.field.as_deref(), a.weights.as_deref())?),
        Command::Slice(a) => {
            let source = match (a.weights, a.field) {
                (Some(w), None) => SliceSource::Weights(w),
                (None, Some(f)) => SliceSource::Field(f),
                _ => return Err(CliError::Usage("slice needs exactly one of --weights and --field".into())),
            };
            let opts = SliceOptions {
                source,
                profile: a.profile,
                free: a.free,
                fixed: a.fixed.map(|f| f.to_vec()),
                lower: a.lower,
                upper: a.upper,
                resolution: a.resolution,
                out: a.out,
            };
            print_json(&commands::cmd_slice(&opts)?);
        }
        Command::Simulate(a) => {
            let scenario = match &a.scenario {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                    serde_json::from_str::<ScenarioFile>(&text).map_err(|e| CliError::format(p, e.to_string()))?
                }
                None => ScenarioFile {
                    seed: a.seed,
                    obstacles: a.m,
                    profile: a.profile,
                    sim: SimConfig { compliant: a.compliance.compliant(), ..Default::default() },
                },
            };
            let opts = SimulateOptions { scenario, method: a.method, weights: a.weights, filter: a.filter.knobs(), out: a.out };
            print_json(&commands::cmd_simulate(&opts)?);
        }
        Command::Bench(a) => {
            let opts = BenchOptions {
                profile: a.profile,
                obstacle_counts: a.m_list,
                scenarios: a.n,
                methods: a.method,
                base_seed: a.seed,
                sim: SimConfig { compliant: a.compliance.compliant(), ..Default::default() },
                weights: a.weights,
                filter: a.filter.knobs(),
                out: a.out,
            };
            let rep = commands::cmd_bench(&opts)?;
            emit(&commands::bench_table(&rep));
            for (lo, hi) in commands::trend_violations(&rep) {
                eprintln!("warning: filtered success rate at M={hi} exceeds M={lo}");
            }
        }
        Command::Oracle(a) => {
            let opts = OracleOptions {
                suites: a.suite,
                profiles: a.profile.map_or_else(|| vec![Profile::Ground, Profile::Quad], |p| vec![p]),
                seed: a.seed,
                draws: a.n,
                weights: a.weights,
                beta: a.beta,
                out: a.out,
            };
            let rep = oracle::cmd_oracle(&opts, |c| emit(&format!("{}\n", c.line())))?;
            if !rep.passed {
                return Ok(exit::VALIDATION);
            }
        }
    }
    Ok(exit::OK)
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("CNCBF_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| CliError::Usage(format!("CNCBF_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = configure_threads().and_then(|_| run(cli)).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
