use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use evqr::bounds::ProblemBounds;
use evqr::estimators::{b_estimators, EstimateRecord};
use evqr::io::{ingest_csv_path, make_reference, ReferenceSpec};
use evqr::projection::ProjectionVariant;
use evqr::{gaussian_dual_value, DiscreteProblem, GaussianModel, Mode, Potentials, Radius, SolverConfig, StepSize};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "evqr", version, about = "Entropic vector quantile regression solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a problem built from a CSV file and a reference measure.
    Solve(SolveArgs),
    /// Print the closed-form optimal dual value of a Gaussian model.
    GaussianOracle {
        /// JSON file with m_Y, Sigma_XX, Sigma_XY, Sigma_YY and epsilon.
        #[arg(long)]
        params: PathBuf,
    },
    /// Print the theoretical constants of a problem as JSON.
    Bounds {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "auto", value_parser = parse_radius, allow_hyphen_values = true)]
        radius: Radius,
        /// Step size the modified rate is evaluated at: auto (= epsilon),
        /// guarded or a number.
        #[arg(long, default_value = "guarded", value_parser = parse_eta, allow_hyphen_values = true)]
        eta: StepSize,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Covariate columns, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    x_cols: Vec<String>,
    /// Response columns, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    y_cols: Vec<String>,
    /// uniform-cube, standard-gaussian or file:PATH.
    #[arg(long, default_value = "uniform-cube", value_parser = parse_reference)]
    reference: ReferenceSpec,
    /// Number of reference atoms to draw.
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Seed of the reference draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    /// auto (= epsilon), guarded or a positive number.
    #[arg(long, default_value = "auto", value_parser = parse_eta, allow_hyphen_values = true)]
    eta: StepSize,
    /// auto or a positive number.
    #[arg(long, default_value = "auto", value_parser = parse_radius, allow_hyphen_values = true)]
    radius: Radius,
    #[arg(long, value_enum, default_value_t = ModeArg::Modified)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = ProjectionArg::Ball)]
    projection: ProjectionArg,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Known optimal dual value for the gap column. Without it gaps are
    /// measured against the last dual value of this run.
    #[arg(long)]
    reference_dual: Option<f64>,
    /// Write the iterate trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the per-row estimates here.
    #[arg(long)]
    estimators: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Vanilla,
    Modified,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ProjectionArg {
    Ball,
    Box,
}

fn parse_eta(s: &str) -> std::result::Result<StepSize, String> {
    match s {
        "auto" => Ok(StepSize::Auto),
        "guarded" => Ok(StepSize::Guarded),
        _ => match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(StepSize::Fixed(v)),
            _ => Err(format!("expected auto, guarded or a positive number, got `{s}`")),
        },
    }
}

fn parse_radius(s: &str) -> std::result::Result<Radius, String> {
    match s {
        "auto" => Ok(Radius::Auto),
        _ => match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Radius::Fixed(v)),
            _ => Err(format!("expected auto or a positive number, got `{s}`")),
        },
    }
}

fn parse_reference(s: &str) -> std::result::Result<ReferenceSpec, String> {
    s.parse().map_err(|e: evqr::Error| e.to_string())
}

struct Built {
    prob: DiscreteProblem,
    reference: evqr::trace::ReferenceInfo,
}

fn build_problem(data: &DataArgs) -> Result<Built> {
    let ing = ingest_csv_path(&data.input, &data.x_cols, &data.y_cols).context("--input")?;
    let reference = make_reference(&data.reference, data.m, ing.y.ncols(), data.seed).context("--reference")?;
    let prob = DiscreteProblem::new(reference.u, reference.a, ing.x, ing.y, ing.b, data.epsilon)
        .context("building the problem (check --epsilon and the input columns)")?;
    Ok(Built {
        prob,
        reference: reference.info,
    })
}

#[derive(Serialize)]
struct Summary {
    converged: bool,
    iterations: usize,
    dual: f64,
    eta: Option<f64>,
    radius: Option<f64>,
    guard_holds: bool,
}

#[derive(Serialize)]
struct EstimatesFile {
    epsilon: f64,
    degenerate_rows: Vec<usize>,
    rows: Vec<EstimateRecord>,
}

fn write_json<T: Serialize>(path: &Path, value: &T, flag: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("{flag}: cannot write {}", path.display()))
}

/// Input errors map to exit code 1; a run that stops at the iteration cap
/// exits with 2.
enum Outcome {
    Converged,
    MaxIters,
}

fn solve(args: &SolveArgs) -> Result<Outcome> {
    let built = build_problem(&args.data)?;
    let prob = &built.prob;
    let cfg = SolverConfig {
        mode: match args.mode {
            ModeArg::Vanilla => Mode::Vanilla,
            ModeArg::Modified => Mode::Modified,
        },
        eta: args.eta,
        radius: args.radius,
        projection: match args.projection {
            ProjectionArg::Ball => ProjectionVariant::JointBall,
            ProjectionArg::Box => ProjectionVariant::CoordinatewiseBox,
        },
        max_iters: args.max_iters,
        tol: args.tol,
        naive_exp: false,
        reference_dual: args.reference_dual,
        reference: Some(built.reference),
    };
    cfg.validate().context("--max-iters/--tol")?;
    log::info!(
        "solving m = {}, n = {}, d_x = {}, d_y = {}, epsilon = {}",
        prob.m(),
        prob.n(),
        prob.d_x(),
        prob.d_y(),
        prob.epsilon()
    );
    let mut sol = evqr::solve(prob, &cfg, None)?;
    if args.reference_dual.is_none() {
        if let Some(last) = sol.trace.final_dual() {
            sol.trace.set_reference_dual(last);
        }
    }
    if let Some(path) = &args.trace {
        fs::write(path, sol.trace.to_json()? + "\n")
            .with_context(|| format!("--trace: cannot write {}", path.display()))?;
    }
    if let Some(path) = &args.estimators {
        let p: &Potentials = sol.half_step.as_ref().unwrap_or(&sol.potentials);
        let est = b_estimators(p, prob)?;
        let out = EstimatesFile {
            epsilon: prob.epsilon(),
            degenerate_rows: est.degenerate_rows(),
            rows: est.records(prob),
        };
        write_json(path, &out, "--estimators")?;
    }
    let h = &sol.trace.header;
    let summary = Summary {
        converged: sol.converged,
        iterations: h.iterations,
        dual: sol.trace.final_dual().unwrap_or(f64::NAN),
        eta: h.eta,
        radius: h.radius,
        guard_holds: h.guard_holds,
    };
    println!("{}", serde_json::to_string(&summary)?);
    if sol.converged {
        Ok(Outcome::Converged)
    } else {
        log::warn!("stopped after {} iterations without meeting --tol", h.iterations);
        Ok(Outcome::MaxIters)
    }
}

fn bounds(data: &DataArgs, radius: Radius, eta: StepSize) -> Result<()> {
    let built = build_problem(data)?;
    let cfg = SolverConfig {
        eta,
        radius,
        ..Default::default()
    };
    let resolved = cfg.resolve(&built.prob).context("--radius/--eta")?;
    let b = ProblemBounds::compute(&built.prob, &Potentials::zeros(&built.prob), resolved.radius, resolved.eta)?;
    println!("{}", serde_json::to_string_pretty(&b)?);
    Ok(())
}

fn gaussian_oracle(params: &Path) -> Result<()> {
    let text = fs::read_to_string(params).with_context(|| format!("--params: cannot read {}", params.display()))?;
    let model = GaussianModel::from_json(&text).context("--params")?;
    let value = gaussian_dual_value(&model).context("--params")?;
    println!("{}", serde_json::to_string(&serde_json::json!({ "dual_value": value }))?);
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Solve(args) => solve(&args),
        Command::GaussianOracle { params } => gaussian_oracle(&params).map(|_| Outcome::Converged),
        Command::Bounds { data, radius, eta } => bounds(&data, radius, eta).map(|_| Outcome::Converged),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Converged) => ExitCode::SUCCESS,
        Ok(Outcome::MaxIters) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
