//! Linear equations in the unknown equilibrium, built from AltGD observations.
//!
//! Every builder starts from the conserved energy of two (or three)
//! consecutive iterates, `h_t - h_{t+1} = 0`, expands the squared distances to
//! the unknown equilibrium, and eliminates whatever the observer cannot see.
//! What remains is linear in the unknowns. Each row is written `m · u = r`
//! with the following canonical layouts, where `s = +1` for zero-sum and
//! `s = -1` for coordination games, `g_t = A y_t - b1`, and `(0, 1, 2)` stand
//! for `(t, t+1, t+2)`:
//!
//! | model | unknowns | coefficients | `r` |
//! |-------|----------|--------------|-----|
//! | initial 3k | `x*, y*, b2` | `-2(x0-x1)/η1`, `-2s(y0-y1)/η2`, `s(y0-y1)` | `-[Δ|x|²/η1 + sΔ|y|²/η2 + <x0,g0> - <x1,g1>]` |
//! | A | `x*, y*` | `2(x0-x1)/η1 + g0 - g1`, `2s(y0-y1)/η2` | `Δ|x|²/η1 + sΔ|y|²/η2 + <x0,g0> - <x1,g1>` |
//! | B | `x*, b1` | `2(x0-2x1+x2)/η1 + g0 - 2g1 + g2`, `2(x1-x2)` | `Δ²|x|²/η1 + sΔ²|y|²/η2 + <x0,g0> - 2<x1,g1> + <x2,g2>` |
//! | C | `x*` | `g1 - g0` | `-[Δ|x|²/η1 + 2<x1,(x1-x0)/η1> - sη2|B x1 - b2|² + <x0,g0> - <x1,g1>]` |
//!
//! with `Δ|v|² = |v0|² - |v1|²` and `Δ²|v|² = |v0|² - 2|v1|² + |v2|²`.
//!
//! Model A replaces `<y, b2>` by `-s<x*, A y>` and so drops `b2`. Model B
//! also eliminates `y*`, leaving a constant `2<x*, b1>` per pair that cancels
//! between consecutive pairs. Model C further substitutes the change in
//! `|y|²` through agent 2's gradient norm.
//!
//! The initial 3k model is degenerate: `B x* = b2` ties two of its unknown
//! blocks together, so its systems are rank deficient by construction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize, Serializer};

use crate::dynamics::{FullInfoRecord, GradientNormRecord, ObservationModel, StrategyNormRecord};
use crate::error::{Error, Result};
use crate::game::{matrix_rows, GameKind, GameSpec, NashPoint, Rates};
use crate::solvers::{self, Diagnostics};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Unknown {
    XStar,
    YStar,
    B1,
    B2,
}

impl Unknown {
    pub fn label(self) -> &'static str {
        match self {
            Unknown::XStar => "x_star",
            Unknown::YStar => "y_star",
            Unknown::B1 => "b1",
            Unknown::B2 => "b2",
        }
    }
}

impl Serialize for Unknown {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Block {
    #[serde(rename = "label")]
    pub unknown: Unknown,
    pub len: usize,
}

/// Which observations produced a row: records `t..t+window` of `segment`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RowSource {
    pub segment: usize,
    pub t: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EquationModel {
    Initial3k,
    A,
    B,
    C,
}

impl EquationModel {
    pub const ALL: [EquationModel; 4] =
        [EquationModel::Initial3k, EquationModel::A, EquationModel::B, EquationModel::C];

    pub fn name(self) -> &'static str {
        match self {
            EquationModel::Initial3k => "initial3k",
            EquationModel::A => "a",
            EquationModel::B => "b",
            EquationModel::C => "c",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }

    pub fn observation_model(self) -> ObservationModel {
        match self {
            EquationModel::Initial3k | EquationModel::A => ObservationModel::FullInfo,
            EquationModel::B => ObservationModel::StrategyNorm,
            EquationModel::C => ObservationModel::GradientNorm,
        }
    }

    pub fn layout(self, k: usize) -> Vec<Block> {
        let blocks: &[Unknown] = match self {
            EquationModel::Initial3k => &[Unknown::XStar, Unknown::YStar, Unknown::B2],
            EquationModel::A => &[Unknown::XStar, Unknown::YStar],
            EquationModel::B => &[Unknown::XStar, Unknown::B1],
            EquationModel::C => &[Unknown::XStar],
        };
        blocks.iter().map(|&unknown| Block { unknown, len: k }).collect()
    }

    /// Number of unknowns, which is also the number of equations needed.
    pub fn unknowns(self, k: usize) -> usize {
        self.layout(k).len() * k
    }

    /// Consecutive records consumed by one equation.
    pub fn window(self) -> usize {
        match self {
            EquationModel::B => 3,
            _ => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquationSystem {
    pub layout: Vec<Block>,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub provenance: Vec<RowSource>,
}

impl EquationSystem {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn unknowns(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn diagnostics(&self) -> Diagnostics {
        solvers::diagnostics(self)
    }

    /// Per-row `|m·u - r| / (1 + scale)`, where `scale` is the larger of
    /// `Σ|m_j u_j|` and `|r|`.
    pub fn consistency(&self, u: &DVector<f64>) -> Vec<f64> {
        (0..self.rows())
            .map(|i| {
                let row = self.matrix.row(i);
                let terms: f64 = row.iter().zip(u.iter()).map(|(m, v)| (m * v).abs()).sum();
                let resid = (row * u)[0] - self.rhs[i];
                resid.abs() / (1.0 + terms.max(self.rhs[i].abs()))
            })
            .collect()
    }

    pub fn max_inconsistency(&self, u: &DVector<f64>) -> f64 {
        self.consistency(u).into_iter().fold(0.0, f64::max)
    }

    /// Debug JSON: layout labels, `M` row-major, `r`, provenance.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "layout": self.layout,
            "M": matrix_rows(&self.matrix),
            "r": self.rhs.as_slice(),
            "provenance": self.provenance,
        })
    }
}

/// The true unknown vector for `layout`, taken from the game data and the
/// oracle equilibrium.
pub fn true_unknowns(layout: &[Block], spec: &GameSpec, nash: &NashPoint) -> DVector<f64> {
    let parts: Vec<&DVector<f64>> = layout
        .iter()
        .map(|b| match b.unknown {
            Unknown::XStar => &nash.x_star,
            Unknown::YStar => &nash.y_star,
            Unknown::B1 => &spec.b1,
            Unknown::B2 => &spec.b2,
        })
        .collect();
    DVector::from_iterator(
        parts.iter().map(|p| p.len()).sum(),
        parts.iter().flat_map(|p| p.iter().copied()),
    )
}

/// `+1` when the energy adds agent 2's terms (zero-sum), `-1` otherwise.
fn y_sign(kind: GameKind) -> f64 {
    -kind.sign()
}

type Row = (Vec<f64>, f64);

fn initial_row(r0: &FullInfoRecord, r1: &FullInfoRecord, rates: Rates, kind: GameKind) -> Row {
    let s = y_sign(kind);
    let dx = &r0.x - &r1.x;
    let dy = &r0.y - &r1.y;
    let mut coeffs: Vec<f64> = dx.iter().map(|d| -2.0 * d / rates.eta1).collect();
    coeffs.extend(dy.iter().map(|d| -2.0 * s * d / rates.eta2));
    coeffs.extend(dy.iter().map(|d| s * d));
    let observed = (r0.x.norm_squared() - r1.x.norm_squared()) / rates.eta1
        + s * (r0.y.norm_squared() - r1.y.norm_squared()) / rates.eta2
        + r0.x.dot(&r0.g1)
        - r1.x.dot(&r1.g1);
    (coeffs, -observed)
}

fn model_a_row(r0: &FullInfoRecord, r1: &FullInfoRecord, rates: Rates, kind: GameKind) -> Row {
    let s = y_sign(kind);
    let cx = (&r0.x - &r1.x) * (2.0 / rates.eta1) + &r0.g1 - &r1.g1;
    let cy = (&r0.y - &r1.y) * (2.0 * s / rates.eta2);
    let mut coeffs: Vec<f64> = cx.iter().copied().collect();
    coeffs.extend(cy.iter());
    let rhs = (r0.x.norm_squared() - r1.x.norm_squared()) / rates.eta1
        + s * (r0.y.norm_squared() - r1.y.norm_squared()) / rates.eta2
        + r0.x.dot(&r0.g1)
        - r1.x.dot(&r1.g1);
    (coeffs, rhs)
}

fn model_b_row(
    r0: &StrategyNormRecord,
    r1: &StrategyNormRecord,
    r2: &StrategyNormRecord,
    rates: Rates,
    kind: GameKind,
) -> Row {
    let s = y_sign(kind);
    let cx = (&r0.x - &r1.x * 2.0 + &r2.x) * (2.0 / rates.eta1) + &r0.g1 - &r1.g1 * 2.0 + &r2.g1;
    let cb = (&r1.x - &r2.x) * 2.0;
    let mut coeffs: Vec<f64> = cx.iter().copied().collect();
    coeffs.extend(cb.iter());
    let sq = |v: f64| v * v;
    let rhs = (r0.x.norm_squared() - 2.0 * r1.x.norm_squared() + r2.x.norm_squared()) / rates.eta1
        + s * (sq(r0.y_norm) - 2.0 * sq(r1.y_norm) + sq(r2.y_norm)) / rates.eta2
        + r0.x.dot(&r0.g1)
        - 2.0 * r1.x.dot(&r1.g1)
        + r2.x.dot(&r2.g1);
    (coeffs, rhs)
}

fn model_c_row(r0: &GradientNormRecord, r1: &GradientNormRecord, rates: Rates, kind: GameKind) -> Row {
    let coeffs: Vec<f64> = (&r1.g1 - &r0.g1).iter().copied().collect();
    let step = (&r1.x - &r0.x) / rates.eta1;
    let observed = (r0.x.norm_squared() - r1.x.norm_squared()) / rates.eta1 + 2.0 * r1.x.dot(&step)
        + kind.sign() * rates.eta2 * r1.g2_norm * r1.g2_norm
        + r0.x.dot(&r0.g1)
        - r1.x.dot(&r1.g1);
    (coeffs, -observed)
}

fn record_dim(x: &DVector<f64>) -> usize {
    x.len()
}

fn assemble<R>(
    model: EquationModel,
    segments: &[&[R]],
    dim: impl Fn(&R) -> usize,
    row: impl Fn(&[R]) -> Row,
) -> Result<EquationSystem> {
    let window = model.window();
    let k = segments
        .iter()
        .find_map(|s| s.first())
        .map(&dim)
        .ok_or(Error::InsufficientRecords { needed: 1, got: 0 })?;
    let layout = model.layout(k);
    let n = model.unknowns(k);
    let mut coeffs = Vec::new();
    let mut rhs = Vec::new();
    let mut provenance = Vec::new();
    for (si, seg) in segments.iter().enumerate() {
        if seg.iter().any(|r| dim(r) != k) {
            return Err(Error::DimensionMismatch(format!("segment {si} mixes record dimensions")));
        }
        for (t, w) in seg.windows(window).enumerate() {
            let (c, r) = row(w);
            coeffs.extend(c);
            rhs.push(r);
            provenance.push(RowSource { segment: si, t });
        }
    }
    if rhs.len() < n {
        return Err(Error::InsufficientRecords { needed: n, got: rhs.len() });
    }
    Ok(EquationSystem {
        layout,
        matrix: DMatrix::from_row_slice(rhs.len(), n, &coeffs),
        rhs: DVector::from_vec(rhs),
        provenance,
    })
}

/// Degenerate model over `(x*, y*, b2)`; one row per consecutive pair.
pub fn build_initial_3k(segments: &[&[FullInfoRecord]], rates: Rates, kind: GameKind) -> Result<EquationSystem> {
    assemble(EquationModel::Initial3k, segments, |r| record_dim(&r.x), |w| {
        initial_row(&w[0], &w[1], rates, kind)
    })
}

/// Model over `(x*, y*)` using agent 2's full strategy.
pub fn build_model_a(segments: &[&[FullInfoRecord]], rates: Rates, kind: GameKind) -> Result<EquationSystem> {
    assemble(EquationModel::A, segments, |r| record_dim(&r.x), |w| {
        model_a_row(&w[0], &w[1], rates, kind)
    })
}

/// Model over `(x*, b1)` using only `||y_t||`; one row per consecutive triple.
pub fn build_model_b(
    segments: &[&[StrategyNormRecord]],
    rates: Rates,
    kind: GameKind,
) -> Result<EquationSystem> {
    assemble(EquationModel::B, segments, |r| record_dim(&r.x), |w| {
        model_b_row(&w[0], &w[1], &w[2], rates, kind)
    })
}

/// Model over `x*` alone using `||B x_t - b2||`.
pub fn build_model_c(
    segments: &[&[GradientNormRecord]],
    rates: Rates,
    kind: GameKind,
) -> Result<EquationSystem> {
    assemble(EquationModel::C, segments, |r| record_dim(&r.x), |w| {
        model_c_row(&w[0], &w[1], rates, kind)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NonlinearCheck {
    /// Largest residual over the two pairs of the triple.
    pub residual: f64,
    /// Largest term magnitude, for relative comparison.
    pub scale: f64,
}

/// Evaluates the per-pair identity that precedes model B's elimination,
///
/// ```text
/// 0 = Δ|x|²/η1 - 2<x0-x1, x*>/η1 + sΔ|y|²/η2 - 2<x1, b1> + 2<x*, b1>
///     + <x0 - x*, g0> - <x1 - x*, g1>
/// ```
///
/// on both pairs of `triple`, given the true `(x*, b1)`. The constant
/// `2<x*, b1>` is the same for both pairs, which is why subtracting them
/// yields a linear equation.
pub fn check_model_b_nonlinear(
    triple: &[StrategyNormRecord],
    rates: Rates,
    kind: GameKind,
    x_star: &DVector<f64>,
    b1: &DVector<f64>,
) -> Result<NonlinearCheck> {
    if triple.len() != 3 {
        return Err(Error::InsufficientRecords { needed: 3, got: triple.len() });
    }
    let s = y_sign(kind);
    let mut out = NonlinearCheck { residual: 0.0, scale: 0.0 };
    for w in triple.windows(2) {
        let (r0, r1) = (&w[0], &w[1]);
        let terms = [
            (r0.x.norm_squared() - r1.x.norm_squared()) / rates.eta1,
            -2.0 * (&r0.x - &r1.x).dot(x_star) / rates.eta1,
            s * (r0.y_norm * r0.y_norm - r1.y_norm * r1.y_norm) / rates.eta2,
            -2.0 * r1.x.dot(b1),
            2.0 * x_star.dot(b1),
            (&r0.x - x_star).dot(&r0.g1),
            -(&r1.x - x_star).dot(&r1.g1),
        ];
        out.residual = out.residual.max(terms.iter().sum::<f64>().abs());
        out.scale = terms.iter().fold(out.scale, |m, t| m.max(t.abs()));
    }
    Ok(out)
}
