use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use arrmdp::experiment::{
    cached_solve, metadata_line, run_compare, run_sweep, write_compare_csv, write_sweep_csv, PolicyChoice,
    ResultStore, SolveRequest, SolverKind, SweepAxis,
};
use arrmdp::models::bitcoin::BitcoinParams;
use arrmdp::models::ethereum::EthereumParams;
use arrmdp::pto::build_pt_mdp;
use arrmdp::{find_threshold, osm_solve, solve_pto, ArrMdp, LinearSolver, ModelSpec, OsmConfig, PtoSolveConfig, ThresholdConfig};

const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_FAILURE: u8 = 1;
const EXIT_DISAGREEMENT: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "arrmdp", version, about = "Average-reward-ratio MDP experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one model and write the report as JSON.
    Solve(SolveArgs),
    /// Solve a grid of points along one axis and write CSV.
    Sweep(SweepArgs),
    /// Run PTO and OSM on identical models and write CSV.
    Compare(CompareArgs),
    /// Bisect for the smallest profitable mining power.
    Threshold(ThresholdArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Bitcoin,
    Ethereum,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "bitcoin")]
    model: Family,
    #[arg(long)]
    alpha: Option<f64>,
    /// Rushing level, Bitcoin only.
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 20)]
    max_fork: u32,
}

impl ModelArgs {
    fn spec_with(&self, alpha: f64) -> arrmdp::Result<ModelSpec> {
        Ok(match self.model {
            Family::Bitcoin => ModelSpec::Bitcoin(BitcoinParams::new(alpha, self.gamma, self.max_fork)?),
            Family::Ethereum => ModelSpec::Ethereum(EthereumParams::new(alpha, self.max_fork)?),
        })
    }
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "pto")]
    solver: SolverChoice,
    #[arg(long, default_value_t = 1e6)]
    horizon: f64,
    #[arg(long, default_value_t = 1e-5)]
    stop_threshold: f64,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    #[arg(long, value_enum, default_value = "direct")]
    linear_solver: LinearChoice,
    /// Bracket width at which the OSM binary search stops.
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    /// Seed each OSM probe with the previous probe's policy.
    #[arg(long)]
    warm_start: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverChoice {
    Pto,
    Osm,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinearChoice {
    Direct,
    Iterative,
}

impl SolverArgs {
    fn pto(&self) -> PtoSolveConfig {
        PtoSolveConfig {
            horizon: self.horizon,
            stop_threshold: self.stop_threshold,
            max_iterations: self.max_iterations,
            linear_solver: self.linear(),
        }
    }

    fn osm(&self) -> OsmConfig {
        OsmConfig {
            epsilon: self.epsilon,
            stop_threshold: self.stop_threshold,
            max_pi_iterations: self.max_iterations,
            linear_solver: self.linear(),
            warm_start: self.warm_start,
            ..OsmConfig::default()
        }
    }

    fn linear(&self) -> LinearSolver {
        match self.linear_solver {
            LinearChoice::Direct => LinearSolver::Direct,
            LinearChoice::Iterative => LinearSolver::Iterative,
        }
    }

    fn kind(&self) -> SolverKind {
        match self.solver {
            SolverChoice::Pto => SolverKind::Pto,
            SolverChoice::Osm => SolverKind::Osm,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Evaluate a reference policy instead of optimising.
    #[arg(long, value_enum, default_value = "optimal")]
    policy: PolicyArg,
    /// Solve a model read from a JSON file instead of a generated one.
    #[arg(long, conflicts_with = "policy")]
    model_file: Option<PathBuf>,
    /// Monte Carlo cross-check of the returned policy with this many steps.
    #[arg(long)]
    mc_steps: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the result JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the generated model, with its state decoder, as JSON.
    #[arg(long)]
    export_model: Option<PathBuf>,
    /// Write the probabilistic-termination model as JSON.
    #[arg(long)]
    export_pt: Option<PathBuf>,
    /// Do not read or write the result store.
    #[arg(long)]
    no_store: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Optimal,
    Honest,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum)]
    axis: AxisArg,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', conflicts_with = "range")]
    values: Vec<f64>,
    /// Inclusive arithmetic range `start:stop:step`.
    #[arg(long)]
    range: Option<String>,
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
    /// Add a wall_time column (makes the output run-dependent).
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_store: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Alpha,
    Horizon,
    MaxFork,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Compare at each of these fork limits instead of --max-fork.
    #[arg(long, value_delimiter = ',')]
    forks: Vec<u32>,
    /// Compare at each of these mining powers instead of --alpha.
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ThresholdArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 0.0)]
    lo: f64,
    #[arg(long, default_value_t = 0.49)]
    hi: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    margin: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

enum Failure {
    Usage(String),
    Solver(arrmdp::Error),
}

impl From<arrmdp::Error> for Failure {
    fn from(e: arrmdp::Error) -> Self {
        match e {
            arrmdp::Error::InvalidParams(msg) => Failure::Usage(msg),
            other => Failure::Solver(other),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Solver(e.into())
    }
}

type Outcome = Result<u8, Failure>;

fn output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn require_alpha(m: &ModelArgs) -> Result<f64, Failure> {
    m.alpha.ok_or_else(|| Failure::Usage("--alpha is required".into()))
}

fn cmd_solve(args: SolveArgs) -> Outcome {
    if let Some(path) = &args.model_file {
        return solve_file(&args, path);
    }
    let spec = args.model.spec_with(require_alpha(&args.model)?)?;
    let mut req = SolveRequest::new(spec.clone(), args.solver.kind());
    req.pto = args.solver.pto();
    req.osm = args.solver.osm();
    req.policy = match args.policy {
        PolicyArg::Optimal => PolicyChoice::Optimal,
        PolicyArg::Honest => PolicyChoice::Honest,
    };
    req.monte_carlo = args.mc_steps.map(|n| (n, args.seed));

    if args.export_model.is_some() || args.export_pt.is_some() {
        let built = spec.build()?;
        let mut mdp = built.mdp;
        mdp.set_semantics(built.semantics);
        if let Some(p) = &args.export_model {
            mdp.write_json(BufWriter::new(File::create(p)?))?;
        }
        if let Some(p) = &args.export_pt {
            let doc = build_pt_mdp(&mdp, req.pto.horizon)?.to_json()?;
            serde_json::to_writer(BufWriter::new(File::create(p)?), &doc).map_err(arrmdp::Error::from)?;
        }
    }

    let store = (!args.no_store).then(ResultStore::from_env);
    let result = cached_solve(&req, store.as_ref())?;
    let json = serde_json::to_string_pretty(&result).map_err(arrmdp::Error::from)?;
    if let Some(p) = &args.out {
        std::fs::write(p, &json)?;
    }
    println!("{json}");
    Ok(if result.report.converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn solve_file(args: &SolveArgs, path: &PathBuf) -> Outcome {
    let mdp = ArrMdp::read_json(BufReader::new(File::open(path)?))?;
    let (report, revenue, rev_pt) = match args.solver.kind() {
        SolverKind::Pto => {
            let out = solve_pto(&mdp, &args.solver.pto())?;
            (out.report, out.revenue, Some(out.rev_pt))
        }
        SolverKind::Osm => {
            let out = osm_solve(&mdp, &args.solver.osm())?;
            (out.report, out.revenue, None)
        }
    };
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "model_file": path,
        "states": mdp.num_states(),
        "rev_arr": revenue.rev_arr,
        "rev_pt": rev_pt,
        "report": report,
        "revenue": revenue,
    }))
    .map_err(arrmdp::Error::from)?;
    if let Some(p) = &args.out {
        std::fs::write(p, &json)?;
    }
    println!("{json}");
    Ok(if report.converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn parse_range(text: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Usage(format!("range `{text}` is not start:stop:step"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0) {
        return Err(bad());
    }
    let n = ((stop - start) / step + 1e-9).floor();
    if n < 0.0 {
        return Ok(Vec::new());
    }
    Ok((0..=n as usize).map(|i| start + step * i as f64).collect())
}

fn cmd_sweep(args: SweepArgs) -> Outcome {
    let values = match &args.range {
        Some(r) => parse_range(r)?,
        None => args.values.clone(),
    };
    let axis = match args.axis {
        AxisArg::Alpha => SweepAxis::Alpha,
        AxisArg::Horizon => SweepAxis::Horizon,
        AxisArg::MaxFork => SweepAxis::MaxFork,
    };
    // The base alpha only matters when it is not the swept axis.
    let alpha = match axis {
        SweepAxis::Alpha => args.model.alpha.unwrap_or(0.0),
        _ => require_alpha(&args.model)?,
    };
    let mut base = SolveRequest::new(args.model.spec_with(alpha)?, args.solver.kind());
    base.pto = args.solver.pto();
    base.osm = args.solver.osm();
    let store = (!args.no_store).then(ResultStore::from_env);
    let outcome = run_sweep(&base, axis, &values, args.jobs, store.as_ref())?;
    let mut w = output(&args.out)?;
    metadata_line(&mut w, "sweep")?;
    write_sweep_csv(&outcome.rows, args.timings, &mut w)?;
    w.flush()?;
    match outcome.failure {
        Some((v, e)) => {
            eprintln!("error: sweep point {v} failed: {e}");
            Ok(EXIT_FAILURE)
        }
        None if outcome.rows.iter().all(|r| r.converged) => Ok(0),
        None => Ok(EXIT_NOT_CONVERGED),
    }
}

fn cmd_compare(args: CompareArgs) -> Outcome {
    let alphas = if args.alphas.is_empty() {
        vec![require_alpha(&args.model)?]
    } else {
        args.alphas.clone()
    };
    let forks = if args.forks.is_empty() {
        vec![args.model.max_fork]
    } else {
        args.forks.clone()
    };
    let mut models = Vec::new();
    for &f in &forks {
        for &a in &alphas {
            let m = ModelArgs {
                max_fork: f,
                ..args.model.clone()
            };
            models.push(m.spec_with(a)?);
        }
    }
    let outcome = run_compare(&models, &args.solver.pto(), &args.solver.osm(), args.jobs)?;
    let mut w = output(&args.out)?;
    metadata_line(&mut w, "compare")?;
    write_compare_csv(&outcome.rows, args.timings, &mut w)?;
    w.flush()?;
    if outcome.disagreements.is_empty() {
        Ok(0)
    } else {
        for d in &outcome.disagreements {
            eprintln!("disagreement: {d}");
        }
        Ok(EXIT_DISAGREEMENT)
    }
}

fn cmd_threshold(args: ThresholdArgs) -> Outcome {
    let spec = args.model.spec_with(args.model.alpha.unwrap_or(args.lo))?;
    let config = ThresholdConfig {
        lo: args.lo,
        hi: args.hi,
        tol: args.tol,
        margin: args.margin,
        solve: args.solver.pto(),
        ..ThresholdConfig::default()
    };
    let record = find_threshold(&spec, &config)?;
    let json = serde_json::to_string_pretty(&record).map_err(arrmdp::Error::from)?;
    if let Some(p) = &args.out {
        std::fs::write(p, &json)?;
    }
    println!("{json}");
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Threshold(a) => cmd_threshold(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
