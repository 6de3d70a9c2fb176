//! Dense solvers for assembled equation systems, with conditioning data.
//!
//! All arithmetic is float64. Determinants are accumulated in log space from
//! the LU factors so their order of magnitude survives even when the value
//! itself under- or overflows.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SVD};
use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::equations::{Block, EquationSystem, Unknown};
use crate::error::{Error, Result};
use crate::game::{relative_error, RelError};

pub const DEFAULT_LAMBDA: f64 = 1e-6;

/// A magnitude that may exceed the float range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Magnitude {
    Value(f64),
    Overflow,
}

impl Magnitude {
    pub fn value(self) -> f64 {
        match self {
            Magnitude::Value(v) => v,
            Magnitude::Overflow => f64::INFINITY,
        }
    }

    pub fn is_overflow(self) -> bool {
        matches!(self, Magnitude::Overflow)
    }
}

impl std::fmt::Display for Magnitude {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Magnitude::Value(v) => write!(f, "{v:e}"),
            Magnitude::Overflow => f.write_str("overflow"),
        }
    }
}

impl Serialize for Magnitude {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Magnitude::Value(v) => s.serialize_f64(*v),
            Magnitude::Overflow => s.serialize_str("overflow"),
        }
    }
}

/// Determinant as sign and base-10 log magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Determinant {
    pub sign: f64,
    /// `log10 |det|`; `-inf` for an exactly singular factorization.
    pub log10_abs: f64,
}

impl Determinant {
    /// Value when representable, `Overflow` above the float range, and `0`
    /// below it.
    pub fn magnitude(&self) -> Magnitude {
        let v = self.sign * 10f64.powf(self.log10_abs);
        if v.is_infinite() {
            Magnitude::Overflow
        } else {
            Magnitude::Value(v)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Square systems only.
    pub det: Option<Determinant>,
    pub cond: Magnitude,
    /// Descending.
    pub singular_values: Vec<f64>,
    /// Singular values above `max(m, n)·eps·σ_max`.
    pub numerical_rank: usize,
}

fn lu_determinant(m: &DMatrix<f64>) -> Determinant {
    let lu = m.clone().lu();
    let mut sign: f64 = lu.p().determinant();
    let mut log10_abs = 0.0;
    let u = lu.u();
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        sign *= d.signum();
        log10_abs += d.abs().log10();
    }
    Determinant { sign, log10_abs }
}

fn sorted_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

fn rank_cutoff(rows: usize, cols: usize, smax: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * smax
}

/// Determinant (square only), 2-norm condition number and singular values.
///
/// `cond = σ_max / σ_min` with `σ_min` floored at the smallest normal float;
/// an exactly zero `σ_min` reports `Overflow`.
pub fn diagnostics(sys: &EquationSystem) -> Diagnostics {
    matrix_diagnostics(&sys.matrix)
}

pub fn matrix_diagnostics(m: &DMatrix<f64>) -> Diagnostics {
    let det = (m.is_square() && m.nrows() > 0).then(|| lu_determinant(m));
    let sv = sorted_singular_values(m);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    let cond = if smin == 0.0 {
        Magnitude::Overflow
    } else {
        let c = smax / smin.max(f64::MIN_POSITIVE);
        if c.is_finite() {
            Magnitude::Value(c)
        } else {
            Magnitude::Overflow
        }
    };
    let cutoff = rank_cutoff(m.nrows(), m.ncols(), smax);
    let numerical_rank = sv.iter().filter(|&&s| s > cutoff).count();
    Diagnostics { det, cond, singular_values: sv, numerical_rank }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolveMethod {
    Direct,
    LeastSquares,
    Tikhonov { lambda: f64 },
}

impl SolveMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SolveMethod::Direct => "direct",
            SolveMethod::LeastSquares => "lsq",
            SolveMethod::Tikhonov { .. } => "tikhonov",
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            SolveMethod::Tikhonov { lambda } => Some(*lambda),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub method: SolveMethod,
    pub layout: Vec<Block>,
    pub solution: DVector<f64>,
    /// Per-block errors against a supplied truth, in layout order.
    pub rel_err: Option<Vec<(Unknown, RelError)>>,
    pub diagnostics: Diagnostics,
    /// `||M u - r||₂`.
    pub residual_norm: f64,
    pub wall_time_s: f64,
}

impl SolveReport {
    pub fn block(&self, unknown: Unknown) -> Option<&[f64]> {
        block_slice(&self.layout, self.solution.as_slice(), unknown)
    }

    pub fn blocks(&self) -> Vec<(Unknown, &[f64])> {
        let mut offset = 0;
        self.layout
            .iter()
            .map(|b| {
                let s = &self.solution.as_slice()[offset..offset + b.len];
                offset += b.len;
                (b.unknown, s)
            })
            .collect()
    }

    /// Records per-block relative errors against `truth`, assembled in the
    /// same layout as the solution.
    pub fn score(&mut self, truth: &DVector<f64>) {
        assert_eq!(truth.len(), self.solution.len(), "truth does not match layout");
        let errs = self
            .layout
            .iter()
            .map(|b| {
                let est = self.block(b.unknown).expect("block in layout");
                let tru = block_slice(&self.layout, truth.as_slice(), b.unknown).expect("block in layout");
                (b.unknown, relative_error(est, tru))
            })
            .collect();
        self.rel_err = Some(errs);
    }

    pub fn rel_err_of(&self, unknown: Unknown) -> Option<RelError> {
        self.rel_err.as_ref()?.iter().find(|(u, _)| *u == unknown).map(|(_, e)| *e)
    }
}

pub(crate) fn block_slice<'a>(layout: &[Block], data: &'a [f64], unknown: Unknown) -> Option<&'a [f64]> {
    let mut offset = 0;
    for b in layout {
        if b.unknown == unknown {
            return Some(&data[offset..offset + b.len]);
        }
        offset += b.len;
    }
    None
}

impl Serialize for SolveReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let solution: BTreeMap<&str, &[f64]> =
            self.blocks().into_iter().map(|(u, v)| (u.label(), v)).collect();
        let mut map = s.serialize_map(None)?;
        map.serialize_entry("method", self.method.name())?;
        if let Some(l) = self.method.lambda() {
            map.serialize_entry("lambda", &l)?;
        }
        map.serialize_entry("solution", &solution)?;
        if let Some(errs) = &self.rel_err {
            let values: BTreeMap<&str, f64> = errs.iter().map(|(u, e)| (u.label(), e.value)).collect();
            map.serialize_entry("rel_err", &values)?;
            let fallback: Vec<&str> =
                errs.iter().filter(|(_, e)| e.absolute).map(|(u, _)| u.label()).collect();
            if !fallback.is_empty() {
                map.serialize_entry("rel_err_absolute", &fallback)?;
            }
        }
        match &self.diagnostics.det {
            Some(d) => {
                map.serialize_entry("det", &d.magnitude())?;
                map.serialize_entry("log10_abs_det", &finite_or_none(d.log10_abs))?;
            }
            None => map.serialize_entry("det", &Option::<f64>::None)?,
        }
        map.serialize_entry("cond", &self.diagnostics.cond)?;
        map.serialize_entry("numerical_rank", &self.diagnostics.numerical_rank)?;
        map.serialize_entry("residual_norm", &self.residual_norm)?;
        map.serialize_entry("wall_time_s", &self.wall_time_s)?;
        map.end()
    }
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn residual(sys: &EquationSystem, u: &DVector<f64>) -> f64 {
    (&sys.matrix * u - &sys.rhs).norm()
}

fn report(sys: &EquationSystem, method: SolveMethod, solution: DVector<f64>, start: Instant) -> SolveReport {
    let residual_norm = residual(sys, &solution);
    let diagnostics = diagnostics(sys);
    SolveReport {
        method,
        layout: sys.layout.clone(),
        solution,
        rel_err: None,
        diagnostics,
        residual_norm,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

/// LU with partial pivoting. Fails only on an exactly zero pivot or a
/// non-finite solution; ill-conditioned systems are solved and their
/// conditioning reported.
pub fn solve_direct(sys: &EquationSystem) -> Result<SolveReport> {
    let start = Instant::now();
    if !sys.matrix.is_square() {
        return Err(Error::InvalidArgument(format!(
            "direct solve needs a square system, got {}x{}",
            sys.matrix.nrows(),
            sys.matrix.ncols()
        )));
    }
    let solution = sys.matrix.clone().lu().solve(&sys.rhs);
    match solution {
        Some(u) if u.iter().all(|v| v.is_finite()) => Ok(report(sys, SolveMethod::Direct, u, start)),
        _ => Err(Error::SingularSystem { diagnostics: Box::new(diagnostics(sys)) }),
    }
}

fn svd(sys: &EquationSystem) -> SVD<f64, nalgebra::Dyn, nalgebra::Dyn> {
    SVD::new(sys.matrix.clone(), true, true)
}

/// Minimum-norm least-squares solution by SVD, discarding singular values
/// below `max(m, n)·eps·σ_max`.
pub fn solve_least_squares(sys: &EquationSystem) -> Result<SolveReport> {
    let start = Instant::now();
    let n = sys.matrix.ncols();
    let svd = svd(sys);
    let smax = svd.singular_values.max();
    let solution = if smax > 0.0 {
        let cutoff = rank_cutoff(sys.matrix.nrows(), n, smax);
        svd.solve(&sys.rhs, cutoff).map_err(|e| Error::InvalidArgument(e.into()))?
    } else {
        DVector::zeros(n)
    };
    Ok(report(sys, SolveMethod::LeastSquares, solution, start))
}

/// Solution of `(MᵀM + λI) u = Mᵀr`, evaluated through the SVD as
/// `u = Σ σᵢ/(σᵢ² + λ) vᵢ (uᵢᵀ r)` to avoid squaring the condition number.
pub fn solve_tikhonov(sys: &EquationSystem, lambda: f64) -> Result<SolveReport> {
    let start = Instant::now();
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let svd = svd(sys);
    let (u, v_t) = (svd.u.as_ref().expect("left vectors"), svd.v_t.as_ref().expect("right vectors"));
    let mut coeffs = u.tr_mul(&sys.rhs);
    for (c, s) in coeffs.iter_mut().zip(svd.singular_values.iter()) {
        *c *= s / (s * s + lambda);
    }
    let solution = v_t.tr_mul(&coeffs);
    Ok(report(sys, SolveMethod::Tikhonov { lambda }, solution, start))
}

pub fn solve(sys: &EquationSystem, method: SolveMethod) -> Result<SolveReport> {
    match method {
        SolveMethod::Direct => solve_direct(sys),
        SolveMethod::LeastSquares => solve_least_squares(sys),
        SolveMethod::Tikhonov { lambda } => solve_tikhonov(sys, lambda),
    }
}
