//! Experiment grids and their CSV output.
//!
//! Each `(dim, instance)` pair owns one seed, derived from the grid seed, that
//! generates the game and drives the initial strategies. Every model, mode
//! and method in the grid therefore sees the same instances.
//!
//! Floats are written with 18 significant digits, so a CSV can be read back
//! without loss.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;

use crate::equations::{EquationModel, Unknown};
use crate::error::{Error, Result};
use crate::game::{generate_instance, GameKind};
use crate::pipeline::{
    self, BaselineConfig, BaselineReport, GenMode, InitDistribution, RunConfig, RunReport,
};
use crate::rng::derive_seed;
use crate::solvers::{Magnitude, SolveMethod};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentGrid {
    pub dims: Vec<usize>,
    pub instances: usize,
    pub kind: GameKind,
    pub lr_scale: f64,
    pub models: Vec<EquationModel>,
    pub modes: Vec<GenMode>,
    pub methods: Vec<SolveMethod>,
    pub init: InitDistribution,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub dim: usize,
    pub instance: usize,
    pub model: EquationModel,
    pub mode: GenMode,
    pub method: SolveMethod,
    pub seed: u64,
}

pub fn instance_seed(seed: u64, dim: usize, instance: usize) -> u64 {
    derive_seed(seed, &[dim as u64, instance as u64])
}

impl ExperimentGrid {
    pub fn total_runs(&self) -> usize {
        self.dims.len() * self.instances * self.models.len() * self.modes.len() * self.methods.len()
    }

    /// Cells in output order: dim, instance, model, mode, method.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(self.total_runs());
        for &dim in &self.dims {
            for instance in 0..self.instances {
                let seed = instance_seed(self.seed, dim, instance);
                for &model in &self.models {
                    for &mode in &self.modes {
                        for &method in &self.methods {
                            out.push(Cell { dim, instance, model, mode, method, seed });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn run_cell(&self, cell: &Cell) -> BenchRow {
        let config = RunConfig {
            model: cell.model,
            mode: cell.mode,
            method: cell.method,
            init: self.init,
            seed: cell.seed,
            symmetric: false,
        };
        let result = generate_instance(cell.dim, self.kind, self.lr_scale, cell.seed)
            .and_then(|spec| pipeline::run(&spec, &config));
        BenchRow::from_result(cell, &config, result)
    }

    /// Runs every cell, concurrently, and returns rows in grid order.
    pub fn run(&self) -> Vec<BenchRow> {
        self.cells().par_iter().map(|c| self.run_cell(c)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub dim: usize,
    pub instance: usize,
    pub model: EquationModel,
    pub mode: GenMode,
    pub method: SolveMethod,
    pub rel_err_x: Option<f64>,
    pub rel_err_y: Option<f64>,
    pub rel_err_b1: Option<f64>,
    /// `None` for non-square systems.
    pub det: Option<Magnitude>,
    pub cond: Option<Magnitude>,
    pub residual: Option<f64>,
    pub updates_used: usize,
    pub wall_time_s: Option<f64>,
    pub seed: u64,
    /// `ok` or an error code.
    pub status: String,
}

impl BenchRow {
    fn from_result(cell: &Cell, config: &RunConfig, result: Result<RunReport>) -> BenchRow {
        let mut row = BenchRow {
            dim: cell.dim,
            instance: cell.instance,
            model: cell.model,
            mode: cell.mode,
            method: cell.method,
            rel_err_x: None,
            rel_err_y: None,
            rel_err_b1: None,
            det: None,
            cond: None,
            residual: None,
            updates_used: config.updates_used(cell.dim),
            wall_time_s: None,
            seed: cell.seed,
            status: "ok".into(),
        };
        match result {
            Ok(r) => {
                row.rel_err_x = r.rel_err(Unknown::XStar);
                row.rel_err_y = r.rel_err(Unknown::YStar);
                row.rel_err_b1 = r.rel_err(Unknown::B1);
                row.det = r.solve.diagnostics.det.map(|d| d.magnitude());
                row.cond = Some(r.solve.diagnostics.cond);
                row.residual = Some(r.solve.residual_norm);
                row.updates_used = r.updates_used;
                row.wall_time_s = Some(r.total_time_s);
            }
            Err(e) => {
                if let Error::SingularSystem { diagnostics } = &e {
                    row.det = diagnostics.det.map(|d| d.magnitude());
                    row.cond = Some(diagnostics.cond);
                }
                row.status = e.code().into();
            }
        }
        row
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::RelErrX => self.rel_err_x,
            Metric::RelErrY => self.rel_err_y,
            Metric::RelErrB1 => self.rel_err_b1,
            Metric::Cond => self.cond.map(Magnitude::value),
            Metric::Residual => self.residual,
            Metric::WallTime => self.wall_time_s,
        }
    }
}

pub const CSV_HEADER: [&str; 16] = [
    "dim",
    "instance",
    "model",
    "mode",
    "method",
    "lambda",
    "rel_err_x",
    "rel_err_y",
    "rel_err_b1",
    "det_or_flag",
    "cond",
    "residual",
    "updates_used",
    "wall_time_s",
    "seed",
    "status",
];

fn fmt_f(v: f64) -> String {
    format!("{v:.17e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

fn fmt_mag(v: Option<Magnitude>) -> String {
    match v {
        None => String::new(),
        Some(Magnitude::Overflow) => "overflow".into(),
        Some(Magnitude::Value(x)) => fmt_f(x),
    }
}

impl BenchRow {
    pub fn to_record(&self) -> [String; 16] {
        [
            self.dim.to_string(),
            self.instance.to_string(),
            self.model.name().into(),
            self.mode.name().into(),
            self.method.name().into(),
            fmt_opt(self.method.lambda()),
            fmt_opt(self.rel_err_x),
            fmt_opt(self.rel_err_y),
            fmt_opt(self.rel_err_b1),
            fmt_mag(self.det),
            fmt_mag(self.cond),
            fmt_opt(self.residual),
            self.updates_used.to_string(),
            fmt_opt(self.wall_time_s),
            self.seed.to_string(),
            self.status.clone(),
        ]
    }

    pub fn from_record(rec: &csv::StringRecord) -> Result<BenchRow> {
        let f: Vec<&str> = rec.iter().collect();
        if f.len() != 16 {
            return Err(bad_csv(format!("expected 16 fields, got {}", f.len())));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|e| bad_csv(format!("{s:?}: {e}")));
        let float = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| bad_csv(format!("{s:?}: {e}")))
            }
        };
        let mag = |s: &str| -> Result<Option<Magnitude>> {
            if s == "overflow" {
                Ok(Some(Magnitude::Overflow))
            } else {
                Ok(float(s)?.map(Magnitude::Value))
            }
        };
        let model = EquationModel::parse(f[2]).ok_or_else(|| bad_csv(format!("model {:?}", f[2])))?;
        let mode = match f[3] {
            "sequential" => GenMode::Sequential,
            "parallel" => GenMode::Parallel,
            other => return Err(bad_csv(format!("mode {other:?}"))),
        };
        let method = match f[4] {
            "direct" => SolveMethod::Direct,
            "lsq" => SolveMethod::LeastSquares,
            "tikhonov" => SolveMethod::Tikhonov {
                lambda: float(f[5])?.ok_or_else(|| bad_csv("tikhonov row without lambda".into()))?,
            },
            other => return Err(bad_csv(format!("method {other:?}"))),
        };
        Ok(BenchRow {
            dim: int(f[0])? as usize,
            instance: int(f[1])? as usize,
            model,
            mode,
            method,
            rel_err_x: float(f[6])?,
            rel_err_y: float(f[7])?,
            rel_err_b1: float(f[8])?,
            det: mag(f[9])?,
            cond: mag(f[10])?,
            residual: float(f[11])?,
            updates_used: int(f[12])? as usize,
            wall_time_s: float(f[13])?,
            seed: int(f[14])?,
            status: f[15].to_string(),
        })
    }
}

fn bad_csv(msg: String) -> Error {
    Error::InvalidArgument(format!("bench csv: {msg}"))
}

pub fn write_csv<W: Write>(rows: &[BenchRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.write_record(r.to_record())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<BenchRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(|e| bad_csv(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(bad_csv("unexpected header".into()));
    }
    rdr.records()
        .map(|rec| rec.map_err(|e| bad_csv(e.to_string())).and_then(|r| BenchRow::from_record(&r)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    RelErrX,
    RelErrY,
    RelErrB1,
    Cond,
    Residual,
    WallTime,
}

impl Metric {
    pub const ALL: [Metric; 6] =
        [Metric::RelErrX, Metric::RelErrY, Metric::RelErrB1, Metric::Cond, Metric::Residual, Metric::WallTime];

    pub fn name(self) -> &'static str {
        match self {
            Metric::RelErrX => "rel_err_x",
            Metric::RelErrY => "rel_err_y",
            Metric::RelErrB1 => "rel_err_b1",
            Metric::Cond => "cond",
            Metric::Residual => "residual",
            Metric::WallTime => "wall_time_s",
        }
    }
}

/// Mean, max and min of one metric over a group's instances.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub dim: usize,
    pub model: EquationModel,
    pub mode: GenMode,
    pub method: SolveMethod,
    pub metric: Metric,
    pub count: usize,
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

pub const SUMMARY_HEADER: [&str; 10] =
    ["dim", "model", "mode", "method", "lambda", "metric", "count", "mean", "max", "min"];

/// Groups rows by `(dim, model, mode, method)` in first-appearance order and
/// summarizes every metric present in at least one row. Values are summed in
/// row order.
pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(usize, EquationModel, GenMode, SolveMethod)> = Vec::new();
    let mut groups: Vec<Vec<&BenchRow>> = Vec::new();
    for r in rows {
        let key = (r.dim, r.model, r.mode, r.method);
        match order.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(r),
            None => {
                order.push(key);
                groups.push(vec![r]);
            }
        }
    }
    let mut out = Vec::new();
    for ((dim, model, mode, method), members) in order.into_iter().zip(groups) {
        for metric in Metric::ALL {
            let vals: Vec<f64> = members.iter().filter_map(|r| r.metric(metric)).collect();
            if vals.is_empty() {
                continue;
            }
            let sum: f64 = vals.iter().sum();
            out.push(SummaryRow {
                dim,
                model,
                mode,
                method,
                metric,
                count: vals.len(),
                mean: sum / vals.len() as f64,
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
            });
        }
    }
    out
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for s in rows {
        out.write_record([
            s.dim.to_string(),
            s.model.name().into(),
            s.mode.name().into(),
            s.method.name().into(),
            fmt_opt(s.method.lambda()),
            s.metric.name().into(),
            s.count.to_string(),
            fmt_f(s.mean),
            fmt_f(s.max),
            fmt_f(s.min),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Time-average baseline over random instances.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineGrid {
    pub dims: Vec<usize>,
    pub instances: usize,
    pub kind: GameKind,
    pub lr_scale: f64,
    pub config: BaselineConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineRow {
    pub dim: usize,
    pub instance: usize,
    pub seed: u64,
    pub report: std::result::Result<BaselineReport, String>,
}

impl BaselineGrid {
    /// Runs instances one after another so wall-clock budgets are not
    /// shared between concurrent runs.
    pub fn run(&self) -> Vec<BaselineRow> {
        let mut out = Vec::new();
        for &dim in &self.dims {
            for instance in 0..self.instances {
                let seed = instance_seed(self.seed, dim, instance);
                let report = generate_instance(dim, self.kind, self.lr_scale, seed)
                    .and_then(|spec| pipeline::run_baseline(&spec, &self.config, seed))
                    .map_err(|e| e.code().to_string());
                out.push(BaselineRow { dim, instance, seed, report });
            }
        }
        out
    }
}

pub fn write_baseline_csv<W: Write>(grid: &BaselineGrid, rows: &[BaselineRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut budgets = grid.config.budgets_s.clone();
    budgets.sort_by(f64::total_cmp);
    let mut header = vec!["dim".to_string(), "instance".into(), "seed".into(), "status".into()];
    header.extend(grid.config.tolerances.iter().map(|t| format!("iters_to_{t}")));
    header.extend(budgets.iter().map(|b| format!("rel_err_x_at_{b}s")));
    header.extend(["iterations", "final_rel_err_x", "final_rel_err_y", "diverged_at"].map(String::from));
    out.write_record(&header)?;
    let opt_u = |v: Option<u64>| v.map(|n| n.to_string()).unwrap_or_default();
    for row in rows {
        let mut f = vec![row.dim.to_string(), row.instance.to_string(), row.seed.to_string()];
        match &row.report {
            Ok(r) => {
                f.push("ok".into());
                f.extend(r.iterations_to_tol.iter().map(|h| opt_u(h.iteration)));
                f.extend(r.rel_err_at_time.iter().map(|b| fmt_opt(b.rel_err)));
                f.push(r.iterations.to_string());
                f.push(fmt_f(r.final_rel_err_x));
                f.push(fmt_f(r.final_rel_err_y));
                f.push(opt_u(r.diverged_at));
            }
            Err(code) => {
                f.push(code.clone());
                f.extend(std::iter::repeat_n(String::new(), header.len() - 4));
            }
        }
        out.write_record(&f)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HitSummary {
    pub tolerance: f64,
    /// Instances that reached the tolerance; the statistics cover only these.
    pub reached: usize,
    pub mean: f64,
    pub max: u64,
    pub min: u64,
}

/// First-hit statistics per tolerance, keyed by dimension.
pub fn baseline_hit_summary(rows: &[BaselineRow]) -> BTreeMap<usize, Vec<HitSummary>> {
    let mut out: BTreeMap<usize, Vec<HitSummary>> = BTreeMap::new();
    let dims: Vec<usize> = {
        let mut d: Vec<usize> = rows.iter().map(|r| r.dim).collect();
        d.dedup();
        d
    };
    for dim in dims {
        let reports: Vec<&BaselineReport> =
            rows.iter().filter(|r| r.dim == dim).filter_map(|r| r.report.as_ref().ok()).collect();
        let Some(first) = reports.first() else { continue };
        let mut entries = Vec::new();
        for (i, h) in first.iterations_to_tol.iter().enumerate() {
            let hits: Vec<u64> = reports.iter().filter_map(|r| r.iterations_to_tol[i].iteration).collect();
            let mean = hits.iter().map(|&v| v as f64).sum::<f64>() / hits.len() as f64;
            entries.push(HitSummary {
                tolerance: h.tolerance,
                reached: hits.len(),
                mean,
                max: hits.iter().copied().max().unwrap_or(0),
                min: hits.iter().copied().min().unwrap_or(0),
            });
        }
        out.insert(dim, entries);
    }
    out
}
