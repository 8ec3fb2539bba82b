use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use slip::harness::{
    fixtures, generate_socp, plan_run, run_experiment, EstimateSettings, ExperimentConfig,
    ScheduleOverrides,
};
use slip::model::{NoiseModel, ProblemDef};
use slip::phase1::{phase1_solve, FeasibilityMargins, PhaseOneOptions, PhaseOneReport};
use slip::solver::{solve, HPolicy, Mode, SolveOptions};
use slip::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_INFEASIBLE_START: u8 = 2;
const EXIT_PHASE1: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "slip",
    version,
    about = "Feasible interior-point solver with exact or stochastic gradients"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a strictly feasible point.
    Phase1(Phase1Args),
    /// Run the solver on one problem.
    Solve(SolveArgs),
    /// Run an experiment described by a TOML file.
    Bench { config: PathBuf },
    /// Write a random problem instance.
    #[command(subcommand)]
    Generate(Generate),
}

/// A JSON problem file, or `fixture:<name>` for a built-in problem.
#[derive(Args)]
struct ProblemArg {
    problem: String,
}

#[derive(Args)]
struct Phase1Args {
    #[command(flatten)]
    problem: ProblemArg,
    /// Required slack of every inequality.
    #[arg(long, default_value_t = 1e-4)]
    margin: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Write the problem back with the point found as its start.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Deterministic,
    Stochastic,
}

#[derive(Clone, Copy, ValueEnum)]
enum HPolicyArg {
    Identity,
    BarrierHessian,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Deterministic)]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20_000)]
    budget: usize,
    #[arg(long)]
    theta0: Option<f64>,
    #[arg(long)]
    mu1: Option<f64>,
    /// Decay rate of μ_k and θ_k; 0.7 gives μ_k = μ₁k^(−0.7).
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    t_alpha: Option<f64>,
    #[arg(long, value_enum, default_value_t = HPolicyArg::Identity)]
    h_policy: HPolicyArg,
    /// `none`, `gaussian:σ`, `bounded:σ` or `minibatch:σ:fraction`.
    #[arg(long, default_value = "none")]
    noise: String,
    /// Keep every n-th iterate in the trace.
    #[arg(long, default_value_t = 1)]
    trace_every: usize,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    /// CSV trace file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Generate {
    /// Random second-order cone program with a certified interior point.
    Socp {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn load_problem(arg: &str) -> anyhow::Result<ProblemDef> {
    if let Some(name) = arg.strip_prefix("fixture:") {
        let f = fixtures::by_name(name).ok_or_else(|| anyhow!("unknown fixture {name}"))?;
        let mut def = f.def;
        def.start
            .get_or_insert_with(|| f.start.iter().copied().collect());
        return Ok(def);
    }
    ProblemDef::load(arg).with_context(|| format!("reading {arg}"))
}

fn parse_noise(text: &str) -> anyhow::Result<NoiseModel> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |i: usize| -> anyhow::Result<f64> {
        parts
            .get(i)
            .ok_or_else(|| anyhow!("noise `{text}` is missing a value"))?
            .parse()
            .with_context(|| format!("noise `{text}`"))
    };
    let noise = match parts[0] {
        "none" => NoiseModel::None,
        "gaussian" => NoiseModel::Gaussian { sigma: num(1)? },
        "bounded" => NoiseModel::ProjectedBounded { sigma: num(1)? },
        "minibatch" => NoiseModel::MinibatchLike {
            sigma: num(1)?,
            batch_frac: num(2)?,
        },
        other => bail!("unknown noise kind `{other}`"),
    };
    noise.validate()?;
    Ok(noise)
}

fn phase1_options(margin: f64, max_iter: usize) -> PhaseOneOptions {
    PhaseOneOptions {
        margins: FeasibilityMargins {
            one_sided: margin,
            two_sided: margin,
        },
        max_iter,
        ..PhaseOneOptions::default()
    }
}

fn phase1_failed(report: &PhaseOneReport) -> anyhow::Error {
    anyhow::Error::new(Error::IterationLimitExceeded(report.iterations)).context(format!(
        "no strictly feasible point found (largest constraint value {:e})",
        report.final_violation
    ))
}

fn run_phase1(args: &Phase1Args) -> anyhow::Result<()> {
    let mut def = load_problem(&args.problem.problem)?;
    let p = def.build()?;
    let x0 = def.start_vector().unwrap_or_else(|| DVector::zeros(p.n()));
    let report = phase1_solve(&p, &x0, &phase1_options(args.margin, args.max_iter))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if !report.is_feasible() {
        return Err(phase1_failed(&report));
    }
    if let Some(path) = &args.output {
        def.start = Some(report.x.clone());
        fs::write(path, def.to_json()?)?;
    }
    Ok(())
}

fn run_solve(args: &SolveArgs) -> anyhow::Result<()> {
    let def = load_problem(&args.problem.problem)?;
    let p = def.build()?;
    let x1 = match def.start_vector() {
        Some(x) => x,
        None => {
            eprintln!("no start given, running the feasibility search");
            let report = phase1_solve(&p, &DVector::zeros(p.n()), &PhaseOneOptions::default())?;
            if !report.is_feasible() {
                return Err(phase1_failed(&report));
            }
            report.point()
        }
    };
    let mode = match args.mode {
        ModeArg::Deterministic => Mode::Deterministic,
        ModeArg::Stochastic => Mode::Stochastic,
    };
    let h_policy = match args.h_policy {
        HPolicyArg::Identity => HPolicy::Identity,
        HPolicyArg::BarrierHessian => HPolicy::BarrierHessian,
    };
    let noise = parse_noise(&args.noise)?;
    let overrides = ScheduleOverrides {
        theta0: args.theta0,
        mu1: args.mu1,
        decay: args.t.map(f64::abs),
        t_alpha: args.t_alpha,
        ..ScheduleOverrides::default()
    };
    let (mut schedule, est) = plan_run(
        &p,
        &x1,
        mode,
        &overrides,
        h_policy,
        &noise,
        &EstimateSettings::default(),
    )?;
    schedule.budget = args.budget;
    let opts = SolveOptions {
        h_policy,
        noise,
        seed: args.seed,
        trace_every: args.trace_every,
    };
    let report = solve(&p, &schedule, &est, &x1, &opts)?;
    match &args.report {
        Some(path) => report.write_json(path)?,
        None => println!("{}", report.to_json()?),
    }
    if let Some(path) = &args.trace {
        report.write_trace(path)?;
    }
    let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
    eprintln!(
        "{}: f {} -> {}, relative stationarity {}, {} resets",
        p.name(),
        show(report.f_initial),
        show(report.f_final),
        show(report.relative_stationarity),
        report.mu_resets
    );
    Ok(())
}

fn run_bench(config: &Path) -> anyhow::Result<()> {
    let cfg =
        ExperimentConfig::load(config).with_context(|| format!("reading {}", config.display()))?;
    let summary = run_experiment(&cfg)?;
    for table in &summary.problems {
        println!("{}", table.problem);
        for row in &table.rows {
            let value = row
                .f_final
                .map_or_else(|| "-".to_string(), |v| format!("{v:.5e}"));
            println!("  {:<14} {value}", row.run);
        }
        if let Some(spread) = table.relative_spread {
            println!("  relative spread {spread:.3e}");
        }
    }
    println!("reports written to {}", cfg.output_dir.display());
    Ok(())
}

fn run_generate(cmd: &Generate) -> anyhow::Result<()> {
    let Generate::Socp { n, l, seed, output } = cmd;
    let g = generate_socp(*n, *l, *seed)?;
    fs::write(output, g.def.to_json()?)?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::InfeasibleStart(_) | Error::Domain { .. }) => EXIT_INFEASIBLE_START,
        Some(Error::IterationLimitExceeded(_) | Error::LeastSquaresResidualTooLarge { .. }) => {
            EXIT_PHASE1
        }
        Some(
            Error::SingularSystem(_)
            | Error::RankDeficient { .. }
            | Error::NeighborhoodViolation { .. }
            | Error::NonPositiveSlack { .. },
        ) => EXIT_NUMERICAL,
        _ => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Phase1(args) => run_phase1(args),
        Command::Solve(args) => run_solve(args),
        Command::Bench { config } => run_bench(config),
        Command::Generate(cmd) => run_generate(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
