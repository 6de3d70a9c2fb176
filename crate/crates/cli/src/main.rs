use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ne_invariant::bench::{self, BaselineGrid, ExperimentGrid};
use ne_invariant::dynamics;
use ne_invariant::energy;
use ne_invariant::equations::EquationModel;
use ne_invariant::game::{generate_instance, oracle_nash, validate_game, Rates};
use ne_invariant::pipeline::{
    self, method_from_name, BaselineConfig, GenMode, InitDistribution, MethodName, RunConfig, RunConfigFile,
    DEFAULT_TOLERANCES,
};
use ne_invariant::reduction::{self, generate_simplex_game, SimplexGame};
use ne_invariant::rng;
use ne_invariant::{GameKind, GameSpec};

#[derive(Parser)]
#[command(name = "ne-invariant", version, about = "Recover Nash equilibria of bilinear games from AltGD observations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random game instance as JSON.
    Gen(GenArgs),
    /// Run one configuration against one game.
    Run(RunArgs),
    /// Sweep an experiment grid and write one CSV row per cell.
    Bench(BenchArgs),
    /// Check conservation of the game's energy along an AltGD trajectory.
    Invariance(InvarianceArgs),
    /// Reduce a simplex game to an unconstrained one.
    Reduce(ReduceArgs),
    /// Time-average convergence of plain AltGD.
    Baseline(BaselineArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    ZeroSum,
    Coordination,
}

impl From<KindArg> for GameKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::ZeroSum => GameKind::ZeroSum,
            KindArg::Coordination => GameKind::Coordination,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    A,
    B,
    C,
    Initial3k,
}

impl From<ModelArg> for EquationModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::A => EquationModel::A,
            ModelArg::B => EquationModel::B,
            ModelArg::C => EquationModel::C,
            ModelArg::Initial3k => EquationModel::Initial3k,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sequential,
    Parallel,
}

impl From<ModeArg> for GenMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Sequential => GenMode::Sequential,
            ModeArg::Parallel => GenMode::Parallel,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Direct,
    Lsq,
    Tikhonov,
}

impl From<MethodArg> for MethodName {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Direct => MethodName::Direct,
            MethodArg::Lsq => MethodName::Lsq,
            MethodArg::Tikhonov => MethodName::Tikhonov,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, short)]
    k: usize,
    #[arg(long, value_enum, default_value = "zero-sum")]
    kind: KindArg,
    #[arg(long, default_value_t = 1.0)]
    lr_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit a payoff-only simplex game instead.
    #[arg(long)]
    simplex: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// GameSpec JSON.
    #[arg(long)]
    game: PathBuf,
    /// RunConfig JSON; flags below are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "a")]
    model: ModelArg,
    #[arg(long, value_enum, default_value = "parallel")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "direct")]
    method: MethodArg,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also recover y* through the role-swapped game (models b and c).
    #[arg(long)]
    symmetric: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// `1..20`, `1..=20` or a comma list.
    #[arg(long, default_value = "1..20")]
    dims: String,
    #[arg(long, default_value_t = 30)]
    instances: usize,
    #[arg(long, value_enum, default_value = "zero-sum")]
    kind: KindArg,
    #[arg(long, default_value_t = 1.0)]
    lr_scale: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "a")]
    model: Vec<ModelArg>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "parallel")]
    mode: Vec<ModeArg>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "direct")]
    method: Vec<MethodArg>,
    /// Tikhonov strengths; one grid column per value.
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Raw CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-dim mean/max/min CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct InvarianceArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = energy::DEFAULT_DRIFT_TOLERANCE)]
    tolerance: f64,
    /// Include per-step drifts.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct ReduceArgs {
    /// SimplexGame JSON.
    #[arg(long)]
    game: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    eta1: f64,
    #[arg(long, default_value_t = 0.1)]
    eta2: f64,
    /// Also solve the reduced game with this model and lift the estimate.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long, value_enum, default_value = "parallel")]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reduced GameSpec JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, default_value = "7")]
    dims: String,
    #[arg(long, default_value_t = 30)]
    instances: usize,
    #[arg(long, value_enum, default_value = "zero-sum")]
    kind: KindArg,
    #[arg(long, default_value_t = 1.0)]
    lr_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',')]
    budget_seconds: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    tolerances: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    max_iterations: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_dims(s: &str) -> anyhow::Result<Vec<usize>> {
    let s = s.trim();
    let range = s.split_once("..=").or_else(|| s.split_once(".."));
    let dims: Vec<usize> = match range {
        Some((lo, hi)) => {
            let (lo, hi): (usize, usize) = (lo.trim().parse()?, hi.trim().parse()?);
            (lo..=hi).collect()
        }
        None => s.split(',').map(|d| d.trim().parse()).collect::<Result<_, _>>()?,
    };
    if dims.is_empty() || dims.contains(&0) {
        bail!("dims must be a non-empty list of positive integers, got {s:?}");
    }
    Ok(dims)
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> anyhow::Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn cmd_gen(a: GenArgs) -> anyhow::Result<()> {
    let kind = a.kind.into();
    if a.simplex {
        let g = generate_simplex_game(a.k, kind, a.seed);
        return write_json(&g, a.out.as_deref());
    }
    let spec = generate_instance(a.k, kind, a.lr_scale, a.seed)?;
    write_json(&spec, a.out.as_deref())
}

fn cmd_run(a: RunArgs) -> anyhow::Result<()> {
    let spec: GameSpec = read_json(&a.game)?;
    let config: RunConfig = match &a.config {
        Some(p) => read_json::<RunConfigFile>(p)?.into(),
        None => RunConfig {
            model: a.model.into(),
            mode: a.mode.into(),
            method: method_from_name(a.method.into(), a.lambda),
            init: InitDistribution::default(),
            seed: a.seed,
            symmetric: a.symmetric,
        },
    };
    config.validate()?;
    if config.symmetric {
        write_json(&pipeline::run_symmetric(&spec, &config)?, a.out.as_deref())
    } else {
        write_json(&pipeline::run(&spec, &config)?, a.out.as_deref())
    }
}

fn cmd_bench(a: BenchArgs) -> anyhow::Result<()> {
    let mut methods = Vec::new();
    for m in &a.method {
        match (MethodName::from(*m), a.lambda.is_empty()) {
            (MethodName::Tikhonov, false) => {
                methods.extend(a.lambda.iter().map(|&l| method_from_name(MethodName::Tikhonov, Some(l))))
            }
            (name, _) => methods.push(method_from_name(name, None)),
        }
    }
    let grid = ExperimentGrid {
        dims: parse_dims(&a.dims)?,
        instances: a.instances,
        kind: a.kind.into(),
        lr_scale: a.lr_scale,
        models: a.model.iter().map(|&m| m.into()).collect(),
        modes: a.mode.iter().map(|&m| m.into()).collect(),
        methods,
        init: InitDistribution::default(),
        seed: a.seed,
    };
    let rows = grid.run();
    bench::write_csv(&rows, output(a.out.as_deref())?)?;
    if let Some(p) = &a.summary {
        bench::write_summary_csv(&bench::summarize(&rows), output(Some(p))?)?;
    }
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed; see the status column", rows.len());
    }
    Ok(())
}

fn cmd_invariance(a: InvarianceArgs) -> anyhow::Result<()> {
    let spec: GameSpec = read_json(&a.game)?;
    let nash = oracle_nash(&spec)?;
    let mut r = rng::init_stream(a.seed, 0);
    let x0 = rng::uniform_vector(&mut r, spec.k(), -1.0, 1.0);
    let y0 = rng::uniform_vector(&mut r, spec.k(), -1.0, 1.0);
    let traj = dynamics::simulate(&spec, &x0, &y0, a.steps)?;
    let mut report = energy::check_invariance(&traj, &spec, &nash);
    let holds = report.holds(a.tolerance);
    if !a.verbose {
        report.step_drifts.clear();
    }
    let out = serde_json::json!({
        "kind": report.kind,
        "h0": report.h0,
        "max_relative_drift": report.max_relative_drift,
        "tolerance": a.tolerance,
        "holds": holds,
        "steps": a.steps,
        "step_drifts": report.step_drifts,
    });
    write_json(&out, None)
}

fn cmd_reduce(a: ReduceArgs) -> anyhow::Result<()> {
    let game: SimplexGame = read_json(&a.game)?;
    let rates = Rates { eta1: a.eta1, eta2: a.eta2 };
    let reduced = reduction::reduce(&game, rates)?;
    let validation = validate_game(&reduced)?;
    if let Some(p) = &a.out {
        write_json(&reduced, Some(p))?;
    }
    let mut out = serde_json::json!({
        "k": game.a.nrows(),
        "reduced_k": reduced.k(),
        "validation": validation,
    });
    if let Ok(ne) = oracle_nash(&reduced) {
        let lifted = reduction::lift(&ne.x_star, &ne.y_star);
        out["oracle"] = serde_json::to_value(&lifted)?;
        out["interior"] = lifted.interior.into();
    }
    if let Some(model) = a.model {
        let mode: GenMode = a.mode.into();
        let config = RunConfig::new(model.into(), mode, ne_invariant::solvers::SolveMethod::Direct, a.seed);
        let report = pipeline::run_simplex(&game, rates, &config)?;
        out["estimate"] = serde_json::to_value(&report)?;
    }
    write_json(&out, None)
}

fn cmd_baseline(a: BaselineArgs) -> anyhow::Result<()> {
    let tolerances = if a.tolerances.is_empty() { DEFAULT_TOLERANCES.to_vec() } else { a.tolerances };
    let grid = BaselineGrid {
        dims: parse_dims(&a.dims)?,
        instances: a.instances,
        kind: a.kind.into(),
        lr_scale: a.lr_scale,
        config: BaselineConfig {
            budgets_s: a.budget_seconds,
            tolerances,
            max_iterations: a.max_iterations,
            init: InitDistribution::default(),
        },
        seed: a.seed,
    };
    let rows = grid.run();
    bench::write_baseline_csv(&grid, &rows, output(a.out.as_deref())?)?;
    Ok(())
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("NE_INVARIANT_THREADS") {
        let n: usize = v.parse().with_context(|| format!("NE_INVARIANT_THREADS={v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Invariance(a) => cmd_invariance(a),
        Command::Reduce(a) => cmd_reduce(a),
        Command::Baseline(a) => cmd_baseline(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<ne_invariant::Error>() {
            Some(err) if err.is_numerical() => {
                let body = serde_json::json!({ "error": err.code(), "message": err.to_string() });
                eprintln!("{body}");
                ExitCode::from(2)
            }
            _ => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
