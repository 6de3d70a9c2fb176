//! Bilinear two-agent games with linear costs.
//!
//! Agent 1 maximizes `<x, A y - b1>` and agent 2 maximizes `<y, B x - b2>`
//! over unbounded strategy spaces. Only zero-sum (`B = -Aᵀ`) and coordination
//! (`B = Aᵀ`) games are represented, so `B` is never stored.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Condition estimate above which the payoff matrix is treated as singular.
pub const SINGULAR_COND: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameKind {
    ZeroSum,
    Coordination,
}

impl GameKind {
    /// Sign `s` with `B = s·Aᵀ`.
    pub fn sign(self) -> f64 {
        match self {
            GameKind::ZeroSum => -1.0,
            GameKind::Coordination => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GameKind::ZeroSum => "zero-sum",
            GameKind::Coordination => "coordination",
        }
    }
}

impl fmt::Display for GameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Learning rates of the two agents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rates {
    pub eta1: f64,
    pub eta2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "GameSpecJson", try_from = "GameSpecJson")]
pub struct GameSpec {
    pub a: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub b2: DVector<f64>,
    pub kind: GameKind,
    pub eta1: f64,
    pub eta2: f64,
    /// Seed the instance was generated from, if any.
    pub seed: Option<u64>,
}

impl GameSpec {
    /// Builds a game and checks it with [`validate_game`].
    pub fn new(
        a: DMatrix<f64>,
        b1: DVector<f64>,
        b2: DVector<f64>,
        kind: GameKind,
        eta1: f64,
        eta2: f64,
    ) -> Result<Self> {
        let spec = GameSpec { a, b1, b2, kind, eta1, eta2, seed: None };
        check_shapes(&spec)?;
        check_rates(&spec)?;
        Ok(spec)
    }

    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    pub fn rates(&self) -> Rates {
        Rates { eta1: self.eta1, eta2: self.eta2 }
    }

    /// Agent 2's payoff matrix, materialized.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        self.a.transpose() * self.kind.sign()
    }

    /// `B x` without forming `B`.
    pub fn apply_b(&self, x: &DVector<f64>) -> DVector<f64> {
        self.a.tr_mul(x) * self.kind.sign()
    }

    /// Agent 1's gradient `A y - b1`.
    pub fn grad1(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.a * y - &self.b1
    }

    /// Agent 2's gradient `B x - b2`.
    pub fn grad2(&self, x: &DVector<f64>) -> DVector<f64> {
        self.apply_b(x) - &self.b2
    }

    /// Agent 2's primal view: the same game with the roles exchanged.
    ///
    /// The swapped game has payoff `B`, costs `(b2, b1)` and rates
    /// `(eta2, eta1)`; its kind is unchanged because `(±Aᵀ)ᵀ·(±1) = A`.
    /// Its equilibrium is `(y*, x*)`.
    pub fn swapped(&self) -> GameSpec {
        GameSpec {
            a: self.b_matrix(),
            b1: self.b2.clone(),
            b2: self.b1.clone(),
            kind: self.kind,
            eta1: self.eta2,
            eta2: self.eta1,
            seed: self.seed,
        }
    }

    pub fn with_rate_scale(&self, scale: f64) -> GameSpec {
        GameSpec { eta1: self.eta1 * scale, eta2: self.eta2 * scale, ..self.clone() }
    }
}

#[derive(Serialize, Deserialize)]
struct GameSpecJson {
    k: usize,
    kind: GameKind,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b1: Vec<f64>,
    b2: Vec<f64>,
    eta1: f64,
    eta2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl From<GameSpec> for GameSpecJson {
    fn from(g: GameSpec) -> Self {
        GameSpecJson {
            k: g.k(),
            kind: g.kind,
            a: matrix_rows(&g.a),
            b1: g.b1.as_slice().to_vec(),
            b2: g.b2.as_slice().to_vec(),
            eta1: g.eta1,
            eta2: g.eta2,
            seed: g.seed,
        }
    }
}

impl TryFrom<GameSpecJson> for GameSpec {
    type Error = String;

    fn try_from(j: GameSpecJson) -> std::result::Result<Self, String> {
        if j.a.len() != j.k {
            return Err(format!("\"A\" has {} rows but k = {}", j.a.len(), j.k));
        }
        let a = matrix_from_rows(&j.a).map_err(|e| e.to_string())?;
        Ok(GameSpec {
            a,
            b1: DVector::from_vec(j.b1),
            b2: DVector::from_vec(j.b2),
            kind: j.kind,
            eta1: j.eta1,
            eta2: j.eta2,
            seed: j.seed,
        })
    }
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

/// The equilibrium pair `(x*, y*)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NashPoint {
    pub x_star: DVector<f64>,
    pub y_star: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub k: usize,
    pub kind: GameKind,
    pub nonsingular: bool,
    pub cond_estimate: f64,
    pub spectral_norm: f64,
    /// `sqrt(eta1 * eta2)`.
    pub rate_geometric_mean: f64,
    /// `2 / ||A||_2`; informational only.
    pub rate_bound: f64,
    pub rate_bound_satisfied: bool,
}

fn check_shapes(spec: &GameSpec) -> Result<()> {
    let k = spec.a.nrows();
    if k == 0 {
        return Err(Error::DimensionMismatch("k must be at least 1".into()));
    }
    if spec.a.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, expected square",
            k,
            spec.a.ncols()
        )));
    }
    for (name, v) in [("b1", &spec.b1), ("b2", &spec.b2)] {
        if v.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "{name} has length {}, expected {k}",
                v.len()
            )));
        }
    }
    Ok(())
}

fn check_rates(spec: &GameSpec) -> Result<()> {
    for (name, value) in [("eta1", spec.eta1), ("eta2", spec.eta2)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveRate { name, value });
        }
    }
    Ok(())
}

fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    m.clone().singular_values()
}

pub fn validate_game(spec: &GameSpec) -> Result<ValidationReport> {
    check_shapes(spec)?;
    check_rates(spec)?;
    let sv = singular_values(&spec.a);
    let smax = sv.max();
    let smin = sv.min();
    let cond_estimate = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let rate_geometric_mean = (spec.eta1 * spec.eta2).sqrt();
    let rate_bound = if smax > 0.0 { 2.0 / smax } else { f64::INFINITY };
    Ok(ValidationReport {
        k: spec.k(),
        kind: spec.kind,
        nonsingular: cond_estimate <= SINGULAR_COND,
        cond_estimate,
        spectral_norm: smax,
        rate_geometric_mean,
        rate_bound,
        rate_bound_satisfied: rate_geometric_mean <= rate_bound,
    })
}

/// Solves the first-order conditions `A y* = b1`, `B x* = b2` directly.
pub fn oracle_nash(spec: &GameSpec) -> Result<NashPoint> {
    let report = validate_game(spec)?;
    if !report.nonsingular {
        return Err(Error::SingularPayoff { cond: report.cond_estimate });
    }
    let singular = || Error::SingularPayoff { cond: report.cond_estimate };
    let y_star = refined_solve(&spec.a, &spec.b1).ok_or_else(singular)?;
    let x_star = refined_solve(&spec.b_matrix(), &spec.b2).ok_or_else(singular)?;
    Ok(NashPoint { x_star, y_star })
}

/// LU solve followed by one round of iterative refinement.
fn refined_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = m.clone().lu();
    let mut sol = lu.solve(rhs)?;
    let residual = rhs - m * &sol;
    if let Some(correction) = lu.solve(&residual) {
        sol += correction;
    }
    Some(sol)
}

/// Draws a random instance: `A ~ U(-1,1)^{k×k}`, `b1, b2 ~ U(-1,1)^k`, and
/// learning rates uniform on `(0, 1/k]` scaled by `lr_scale`.
///
/// Draws come from stream [`rng::GAME_STREAM`] of `seed` in the order
/// A (row-major), b1, b2, eta1, eta2, so the same seed gives the same payoff
/// data for every `kind` and `lr_scale`.
pub fn generate_instance(k: usize, kind: GameKind, lr_scale: f64, seed: u64) -> Result<GameSpec> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if !(lr_scale > 0.0 && lr_scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("lr_scale must be positive, got {lr_scale}")));
    }
    let mut rng = rng::stream(seed, rng::GAME_STREAM);
    let a = rng::uniform_matrix(&mut rng, k, -1.0, 1.0);
    let b1 = rng::uniform_vector(&mut rng, k, -1.0, 1.0);
    let b2 = rng::uniform_vector(&mut rng, k, -1.0, 1.0);
    let max_rate = 1.0 / k as f64;
    // 1 - U[0,1) lies in (0, 1].
    let eta1 = (1.0 - rng.gen::<f64>()) * max_rate * lr_scale;
    let eta2 = (1.0 - rng.gen::<f64>()) * max_rate * lr_scale;
    Ok(GameSpec { a, b1, b2, kind, eta1, eta2, seed: Some(seed) })
}

/// `||estimate - truth||₂ / ||truth||₂`, or the absolute error when the
/// truth is the zero vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RelError {
    pub value: f64,
    /// Set when `truth` was zero and `value` is an absolute error.
    pub absolute: bool,
}

pub fn relative_error(estimate: &[f64], truth: &[f64]) -> RelError {
    assert_eq!(estimate.len(), truth.len(), "relative_error: length mismatch");
    let diff = estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum::<f64>()
        .sqrt();
    let norm = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    if norm == 0.0 {
        RelError { value: diff, absolute: true }
    } else {
        RelError { value: diff / norm, absolute: false }
    }
}
