//! End-to-end runs: simulate, observe, build, solve, score.
//!
//! Sequential runs draw one initial strategy and advance it for exactly the
//! model's update budget, reusing overlapping windows of the single
//! trajectory. Parallel runs draw one initial strategy per required equation
//! and advance each by one update (two for model B), so rows come from
//! independent short trajectories. Initialization `i` always uses RNG stream
//! `i + 1` of the run seed and rows are assembled in initialization order,
//! which makes parallel output independent of the thread count.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, AltGd, Trajectory};
use crate::equations::{self, EquationModel, EquationSystem, Unknown};
use crate::error::{Error, Result};
use crate::game::{oracle_nash, relative_error, GameKind, GameSpec, NashPoint, RelError};
use crate::reduction::{self, Lifted, SimplexGame};
use crate::rng;
use crate::solvers::{self, SolveMethod, SolveReport, DEFAULT_LAMBDA};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenMode {
    Sequential,
    Parallel,
}

impl GenMode {
    pub fn name(self) -> &'static str {
        match self {
            GenMode::Sequential => "sequential",
            GenMode::Parallel => "parallel",
        }
    }
}

/// Initial strategies are drawn from `U(low, high)^k` for both agents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitDistribution {
    pub low: f64,
    pub high: f64,
}

impl Default for InitDistribution {
    fn default() -> Self {
        InitDistribution { low: -1.0, high: 1.0 }
    }
}

impl InitDistribution {
    fn draw(&self, seed: u64, index: usize, k: usize) -> (DVector<f64>, DVector<f64>) {
        let mut rng = rng::init_stream(seed, index);
        let x = rng::uniform_vector(&mut rng, k, self.low, self.high);
        let y = rng::uniform_vector(&mut rng, k, self.low, self.high);
        (x, y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Direct,
    Lsq,
    Tikhonov,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: EquationModel,
    pub mode: GenMode,
    pub method: SolveMethod,
    pub init: InitDistribution,
    pub seed: u64,
    /// Also recover agent 2's equilibrium via the role-swapped game
    /// (models B and C).
    pub symmetric: bool,
}

impl RunConfig {
    pub fn new(model: EquationModel, mode: GenMode, method: SolveMethod, seed: u64) -> Self {
        RunConfig { model, mode, method, init: InitDistribution::default(), seed, symmetric: false }
    }

    /// Independent initial strategies the run draws.
    pub fn initializations(&self, k: usize) -> usize {
        match self.mode {
            GenMode::Sequential => 1,
            GenMode::Parallel => self.model.unknowns(k),
        }
    }

    /// AltGD updates applied to each initial strategy.
    pub fn updates_per_init(&self, k: usize) -> usize {
        match self.mode {
            GenMode::Sequential => self.model.unknowns(k) + self.model.window() - 2,
            GenMode::Parallel => self.model.window() - 1,
        }
    }

    pub fn updates_used(&self, k: usize) -> usize {
        self.initializations(k) * self.updates_per_init(k)
    }

    pub fn validate(&self) -> Result<()> {
        if let SolveMethod::Tikhonov { lambda } = self.method {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
            }
        }
        if self.init.low.partial_cmp(&self.init.high) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidArgument("init range must satisfy low < high".into()));
        }
        if self.symmetric && !matches!(self.model, EquationModel::B | EquationModel::C) {
            return Err(Error::InvalidArgument("symmetric runs need model b or c".into()));
        }
        Ok(())
    }
}

/// JSON form of [`RunConfig`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfigFile {
    pub model: EquationModel,
    pub mode: GenMode,
    #[serde(default = "default_method")]
    pub method: MethodName,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub init: Option<InitDistribution>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub symmetric: bool,
}

fn default_method() -> MethodName {
    MethodName::Direct
}

pub fn method_from_name(name: MethodName, lambda: Option<f64>) -> SolveMethod {
    match name {
        MethodName::Direct => SolveMethod::Direct,
        MethodName::Lsq => SolveMethod::LeastSquares,
        MethodName::Tikhonov => SolveMethod::Tikhonov { lambda: lambda.unwrap_or(DEFAULT_LAMBDA) },
    }
}

impl From<RunConfigFile> for RunConfig {
    fn from(f: RunConfigFile) -> Self {
        RunConfig {
            model: f.model,
            mode: f.mode,
            method: method_from_name(f.method, f.lambda),
            init: f.init.unwrap_or_default(),
            seed: f.seed,
            symmetric: f.symmetric,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub model: EquationModel,
    pub mode: GenMode,
    pub k: usize,
    pub kind: GameKind,
    #[serde(flatten)]
    pub solve: SolveReport,
    pub initializations: usize,
    pub updates_per_init: usize,
    /// Total AltGD updates across all initializations.
    pub updates_used: usize,
    /// Simulation, assembly and solve.
    pub total_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lifted: Option<Lifted>,
}

impl RunReport {
    pub fn rel_err(&self, unknown: Unknown) -> Option<f64> {
        self.solve.rel_err_of(unknown).map(|e| e.value)
    }
}

/// Simulates every initialization of `config` on `spec`.
pub fn simulate_inits(spec: &GameSpec, config: &RunConfig) -> Result<Vec<Trajectory>> {
    let k = spec.k();
    let updates = config.updates_per_init(k);
    let results: Vec<Result<Trajectory>> = (0..config.initializations(k))
        .into_par_iter()
        .map(|i| {
            let (x0, y0) = config.init.draw(config.seed, i, k);
            dynamics::simulate(spec, &x0, &y0, updates)
        })
        .collect();
    results.into_iter().collect()
}

/// Builds the model's system from a set of trajectories, one segment each.
pub fn build_system(spec: &GameSpec, model: EquationModel, trajs: &[Trajectory]) -> Result<EquationSystem> {
    let (rates, kind) = (spec.rates(), spec.kind);
    match model {
        EquationModel::Initial3k | EquationModel::A => {
            let recs: Vec<_> = trajs.iter().map(Trajectory::full_info).collect();
            let segs: Vec<&[_]> = recs.iter().map(Vec::as_slice).collect();
            if model == EquationModel::A {
                equations::build_model_a(&segs, rates, kind)
            } else {
                equations::build_initial_3k(&segs, rates, kind)
            }
        }
        EquationModel::B => {
            let recs: Vec<_> = trajs.iter().map(Trajectory::strategy_norm).collect();
            let segs: Vec<&[_]> = recs.iter().map(Vec::as_slice).collect();
            equations::build_model_b(&segs, rates, kind)
        }
        EquationModel::C => {
            let recs: Vec<_> = trajs.iter().map(Trajectory::gradient_norm).collect();
            let segs: Vec<&[_]> = recs.iter().map(Vec::as_slice).collect();
            equations::build_model_c(&segs, rates, kind)
        }
    }
}

fn execute(spec: &GameSpec, config: &RunConfig, oracle: Option<&NashPoint>) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let k = spec.k();
    let trajs = simulate_inits(spec, config)?;
    let sys = build_system(spec, config.model, &trajs)?;
    let mut solve = solvers::solve(&sys, config.method)?;
    let total_time_s = start.elapsed().as_secs_f64();
    if let Some(ne) = oracle {
        solve.score(&equations::true_unknowns(&sys.layout, spec, ne));
    }
    Ok(RunReport {
        model: config.model,
        mode: config.mode,
        k,
        kind: spec.kind,
        solve,
        initializations: config.initializations(k),
        updates_per_init: config.updates_per_init(k),
        updates_used: trajs.iter().map(Trajectory::updates).sum(),
        total_time_s,
        lifted: None,
    })
}

/// Runs `config` on `spec`, scoring against the direct oracle when the
/// payoff matrix admits one. The solve itself never sees the oracle.
pub fn run(spec: &GameSpec, config: &RunConfig) -> Result<RunReport> {
    let oracle = oracle_nash(spec).ok();
    execute(spec, config, oracle.as_ref())
}

pub fn run_sequential(spec: &GameSpec, config: &RunConfig) -> Result<RunReport> {
    run(spec, &RunConfig { mode: GenMode::Sequential, ..config.clone() })
}

pub fn run_parallel(spec: &GameSpec, config: &RunConfig) -> Result<RunReport> {
    run(spec, &RunConfig { mode: GenMode::Parallel, ..config.clone() })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetricReport {
    pub agent1: RunReport,
    /// Run on the role-swapped game; its `x_star` block is agent 2's `y*`.
    pub agent2: RunReport,
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_err_x: Option<RelError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_err_y: Option<RelError>,
    pub updates_used: usize,
}

/// Recovers both equilibrium blocks with a model that only characterizes
/// `x*`, by also running it on agent 2's view of the game.
pub fn run_symmetric(spec: &GameSpec, config: &RunConfig) -> Result<SymmetricReport> {
    let config = RunConfig { symmetric: true, ..config.clone() };
    config.validate()?;
    let swapped = spec.swapped();
    let swapped_config = RunConfig { seed: rng::derive_seed(config.seed, &[2]), ..config.clone() };
    let agent1 = run(spec, &config)?;
    let agent2 = run(&swapped, &swapped_config)?;
    let x_star = agent1.solve.block(Unknown::XStar).expect("x block").to_vec();
    let y_star = agent2.solve.block(Unknown::XStar).expect("x block").to_vec();
    let oracle = oracle_nash(spec).ok();
    let rel_err_x = oracle.as_ref().map(|ne| relative_error(&x_star, ne.x_star.as_slice()));
    let rel_err_y = oracle.as_ref().map(|ne| relative_error(&y_star, ne.y_star.as_slice()));
    let updates_used = agent1.updates_used + agent2.updates_used;
    Ok(SymmetricReport { agent1, agent2, x_star, y_star, rel_err_x, rel_err_y, updates_used })
}

/// Reduces a simplex game, runs `config` on the reduced game, and lifts the
/// estimate back onto the simplex. Needs a symmetric run for models B and C
/// so both strategies can be lifted.
pub fn run_simplex(game: &SimplexGame, rates: crate::game::Rates, config: &RunConfig) -> Result<RunReport> {
    let reduced = reduction::reduce(game, rates)?;
    let (mut report, x_tilde, y_tilde) = match config.model {
        EquationModel::A | EquationModel::Initial3k => {
            let r = run(&reduced, config)?;
            let x = DVector::from_column_slice(r.solve.block(Unknown::XStar).expect("x block"));
            let y = DVector::from_column_slice(r.solve.block(Unknown::YStar).expect("y block"));
            (r, x, y)
        }
        EquationModel::B | EquationModel::C => {
            let s = run_symmetric(&reduced, config)?;
            let (x, y) = (DVector::from_vec(s.x_star), DVector::from_vec(s.y_star));
            let mut r = s.agent1;
            r.updates_used += s.agent2.updates_used;
            (r, x, y)
        }
    };
    report.lifted = Some(reduction::lift(&x_tilde, &y_tilde));
    Ok(report)
}

/// Default relative-error thresholds for the time-average baseline.
pub const DEFAULT_TOLERANCES: [f64; 5] = [0.1, 0.05, 0.01, 0.005, 0.001];

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    /// Wall-clock checkpoints, seconds.
    pub budgets_s: Vec<f64>,
    pub tolerances: Vec<f64>,
    /// Hard cap on averaged iterates.
    pub max_iterations: u64,
    pub init: InitDistribution,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            budgets_s: Vec::new(),
            tolerances: DEFAULT_TOLERANCES.to_vec(),
            max_iterations: 1_000_000,
            init: InitDistribution::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ToleranceHit {
    pub tolerance: f64,
    /// Number of averaged iterates when the error first reached the
    /// tolerance; `None` if it never did.
    pub iteration: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BudgetError {
    pub budget_s: f64,
    pub rel_err: Option<f64>,
    pub iteration: Option<u64>,
}

/// Time-average convergence of plain AltGD. Errors are measured on agent
/// 1's averaged strategy against `x*`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineReport {
    pub iterations_to_tol: Vec<ToleranceHit>,
    pub rel_err_at_time: Vec<BudgetError>,
    /// Iterates averaged.
    pub iterations: u64,
    pub final_rel_err_x: f64,
    pub final_rel_err_y: f64,
    pub average_x: Vec<f64>,
    pub average_y: Vec<f64>,
    /// Iterate count at which divergence stopped the run.
    pub diverged_at: Option<u64>,
    pub elapsed_s: f64,
}

impl BaselineReport {
    pub fn first_hit(&self, tolerance: f64) -> Option<u64> {
        self.iterations_to_tol.iter().find(|h| h.tolerance == tolerance).and_then(|h| h.iteration)
    }
}

const CLOCK_CHECK_EVERY: u64 = 256;

/// Runs AltGD from `(x0, y0)` and tracks the running average
/// `(1/T) Σ_{t<T} (x_t, y_t)`. Divergence ends the run and is reported, not
/// raised.
pub fn run_baseline_from(
    spec: &GameSpec,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    config: &BaselineConfig,
) -> Result<BaselineReport> {
    let ne = oracle_nash(spec)?;
    let k = spec.k();
    if x0.len() != k || y0.len() != k {
        return Err(Error::DimensionMismatch("initial strategy length differs from k".into()));
    }
    let stepper = AltGd::new(spec);
    let mut budgets = config.budgets_s.clone();
    budgets.sort_by(f64::total_cmp);
    let max_budget = budgets.last().copied().unwrap_or(0.0);
    let mut hits: Vec<ToleranceHit> =
        config.tolerances.iter().map(|&tolerance| ToleranceHit { tolerance, iteration: None }).collect();
    let mut at_time: Vec<BudgetError> =
        budgets.iter().map(|&budget_s| BudgetError { budget_s, rel_err: None, iteration: None }).collect();

    let x_norm = ne.x_star.norm();
    let err_of = |avg: &DVector<f64>, truth: &DVector<f64>, norm: f64| {
        let d = (avg - truth).norm();
        if norm > 0.0 { d / norm } else { d }
    };

    let (mut x, mut y) = (x0.clone(), y0.clone());
    let (mut g1, mut g2) = (DVector::zeros(k), DVector::zeros(k));
    let (mut sum_x, mut sum_y) = (DVector::<f64>::zeros(k), DVector::<f64>::zeros(k));
    let mut avg = DVector::<f64>::zeros(k);
    let mut err_x = f64::INFINITY;
    let mut t: u64 = 0;
    let mut diverged_at = None;
    let start = Instant::now();
    let mut unhit = hits.len();
    let mut next_budget = 0;
    let waiting = !(hits.is_empty() && at_time.is_empty());

    while t < config.max_iterations {
        sum_x += &x;
        sum_y += &y;
        t += 1;
        avg.copy_from(&sum_x);
        avg /= t as f64;
        err_x = err_of(&avg, &ne.x_star, x_norm);
        if unhit > 0 {
            for h in hits.iter_mut().filter(|h| h.iteration.is_none()) {
                if err_x <= h.tolerance {
                    h.iteration = Some(t);
                    unhit -= 1;
                }
            }
        }
        if t.is_multiple_of(CLOCK_CHECK_EVERY) || t == 1 {
            let elapsed = start.elapsed().as_secs_f64();
            while next_budget < at_time.len() && elapsed >= at_time[next_budget].budget_s {
                at_time[next_budget].rel_err = Some(err_x);
                at_time[next_budget].iteration = Some(t);
                next_budget += 1;
            }
            if waiting && unhit == 0 && elapsed >= max_budget {
                break;
            }
            if dynamics::diverged(&x) || dynamics::diverged(&y) {
                diverged_at = Some(t);
                break;
            }
        }
        stepper.advance(&mut x, &mut y, &mut g1, &mut g2);
    }

    let avg_y = &sum_y / t.max(1) as f64;
    let final_rel_err_y = err_of(&avg_y, &ne.y_star, ne.y_star.norm());
    let average_x = (&sum_x / t.max(1) as f64).as_slice().to_vec();
    Ok(BaselineReport {
        iterations_to_tol: hits,
        rel_err_at_time: at_time,
        iterations: t,
        final_rel_err_x: err_x,
        final_rel_err_y,
        average_x,
        average_y: avg_y.as_slice().to_vec(),
        diverged_at,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// [`run_baseline_from`] with the initial strategy drawn from stream 1 of
/// `seed`, the same point a sequential run with that seed starts from.
pub fn run_baseline(spec: &GameSpec, config: &BaselineConfig, seed: u64) -> Result<BaselineReport> {
    let (x0, y0) = config.init.draw(seed, 0, spec.k());
    run_baseline_from(spec, &x0, &y0, config)
}
