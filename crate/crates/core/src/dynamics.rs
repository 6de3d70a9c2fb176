//! Alternating gradient descent and the observation streams it exposes.
//!
//! One AltGD update is
//!
//! ```text
//! x' = x + eta1 (A y  - b1)
//! y' = y + eta2 (B x' - b2)
//! ```
//!
//! Agent 2 reacts to agent 1's *new* strategy. Every path in the crate that
//! advances a state goes through [`AltGd::advance`], so replays are bitwise
//! identical.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::GameSpec;

/// Any coordinate beyond this magnitude counts as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e150;

pub(crate) fn diverged(v: &DVector<f64>) -> bool {
    v.iter().any(|c| !c.is_finite() || c.abs() > DIVERGENCE_THRESHOLD)
}

/// AltGD stepper for one game, with `B` materialized once.
pub struct AltGd<'a> {
    spec: &'a GameSpec,
    b: DMatrix<f64>,
}

impl<'a> AltGd<'a> {
    pub fn new(spec: &'a GameSpec) -> Self {
        AltGd { spec, b: spec.b_matrix() }
    }

    pub fn spec(&self) -> &GameSpec {
        self.spec
    }

    /// `out = A y - b1`
    pub fn grad1_into(&self, y: &DVector<f64>, out: &mut DVector<f64>) {
        out.gemv(1.0, &self.spec.a, y, 0.0);
        *out -= &self.spec.b1;
    }

    /// `out = B x - b2`
    pub fn grad2_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.gemv(1.0, &self.b, x, 0.0);
        *out -= &self.spec.b2;
    }

    /// One update in place. On return `g1` holds the gradient at the old `y`
    /// and `g2` the gradient at the new `x`, i.e. exactly the vectors used.
    pub fn advance(
        &self,
        x: &mut DVector<f64>,
        y: &mut DVector<f64>,
        g1: &mut DVector<f64>,
        g2: &mut DVector<f64>,
    ) {
        self.grad1_into(y, g1);
        x.axpy(self.spec.eta1, g1, 1.0);
        self.grad2_into(x, g2);
        y.axpy(self.spec.eta2, g2, 1.0);
    }
}

fn check_state(spec: &GameSpec, x: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
    let k = spec.k();
    if x.len() != k || y.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "state has lengths ({}, {}), game has k = {k}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

fn divergence(step: usize, x: &DVector<f64>, y: &DVector<f64>) -> Error {
    Error::Divergence {
        step,
        last_x: x.as_slice().to_vec(),
        last_y: y.as_slice().to_vec(),
    }
}

/// One AltGD update from `(x, y)`.
pub fn step(spec: &GameSpec, x: &DVector<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    check_state(spec, x, y)?;
    if diverged(x) || diverged(y) {
        return Err(divergence(0, x, y));
    }
    let k = spec.k();
    let (mut nx, mut ny) = (x.clone(), y.clone());
    let (mut g1, mut g2) = (DVector::zeros(k), DVector::zeros(k));
    AltGd::new(spec).advance(&mut nx, &mut ny, &mut g1, &mut g2);
    if diverged(&nx) || diverged(&ny) {
        return Err(divergence(1, x, y));
    }
    Ok((nx, ny))
}

/// Iterates `(x_t, y_t)` for `t = 0..=T` with the gradients each agent saw.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub xs: Vec<DVector<f64>>,
    pub ys: Vec<DVector<f64>>,
    /// `g1_t = A y_t - b1`.
    pub grads1: Vec<DVector<f64>>,
    /// `g2_t = B x_t - b2`. The update producing `y_{t+1}` uses `g2_{t+1}`.
    pub grads2: Vec<DVector<f64>>,
}

impl Trajectory {
    /// Number of updates `T`.
    pub fn updates(&self) -> usize {
        self.xs.len() - 1
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Debug dump: `t, x_0.., y_0.., g1_0.., g2_0..`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let k = self.xs.first().map_or(0, |v| v.len());
        let mut header = vec!["t".to_string()];
        for prefix in ["x", "y", "g1", "g2"] {
            header.extend((0..k).map(|i| format!("{prefix}_{i}")));
        }
        writeln!(w, "{}", header.join(","))?;
        for t in 0..self.len() {
            let mut row = vec![t.to_string()];
            for v in [&self.xs[t], &self.ys[t], &self.grads1[t], &self.grads2[t]] {
                row.extend(v.iter().map(|c| format!("{c:.16e}")));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn full_info(&self) -> Vec<FullInfoRecord> {
        (0..self.len())
            .map(|t| FullInfoRecord {
                x: self.xs[t].clone(),
                g1: self.grads1[t].clone(),
                y: self.ys[t].clone(),
            })
            .collect()
    }

    pub fn strategy_norm(&self) -> Vec<StrategyNormRecord> {
        (0..self.len())
            .map(|t| StrategyNormRecord {
                x: self.xs[t].clone(),
                g1: self.grads1[t].clone(),
                y_norm: self.ys[t].norm(),
            })
            .collect()
    }

    pub fn gradient_norm(&self) -> Vec<GradientNormRecord> {
        (0..self.len())
            .map(|t| GradientNormRecord {
                x: self.xs[t].clone(),
                g1: self.grads1[t].clone(),
                g2_norm: self.grads2[t].norm(),
            })
            .collect()
    }
}

/// Runs `updates` AltGD steps from `(x0, y0)`.
pub fn simulate(spec: &GameSpec, x0: &DVector<f64>, y0: &DVector<f64>, updates: usize) -> Result<Trajectory> {
    if updates == 0 {
        return Err(Error::InvalidArgument("simulate needs at least one update".into()));
    }
    check_state(spec, x0, y0)?;
    if diverged(x0) || diverged(y0) {
        return Err(divergence(0, x0, y0));
    }
    let k = spec.k();
    let stepper = AltGd::new(spec);
    let mut traj = Trajectory {
        xs: Vec::with_capacity(updates + 1),
        ys: Vec::with_capacity(updates + 1),
        grads1: Vec::with_capacity(updates + 1),
        grads2: Vec::with_capacity(updates + 1),
    };
    let (mut x, mut y) = (x0.clone(), y0.clone());
    let mut g1 = DVector::zeros(k);
    let mut g2 = DVector::zeros(k);
    stepper.grad2_into(&x, &mut g2);
    for t in 0..updates {
        traj.xs.push(x.clone());
        traj.ys.push(y.clone());
        traj.grads2.push(g2.clone());
        stepper.advance(&mut x, &mut y, &mut g1, &mut g2);
        traj.grads1.push(g1.clone());
        if diverged(&x) || diverged(&y) {
            return Err(divergence(t + 1, &traj.xs[t], &traj.ys[t]));
        }
    }
    stepper.grad1_into(&y, &mut g1);
    if diverged(&g1) || diverged(&g2) {
        return Err(divergence(updates, &x, &y));
    }
    traj.xs.push(x);
    traj.ys.push(y);
    traj.grads1.push(g1);
    traj.grads2.push(g2);
    Ok(traj)
}

/// The three information models an observer may be restricted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObservationModel {
    /// `x_t`, `A y_t - b1`, and `y_t`.
    FullInfo,
    /// `x_t`, `A y_t - b1`, and `||y_t||`.
    StrategyNorm,
    /// `x_t`, `A y_t - b1`, and `||B x_t - b2||`.
    GradientNorm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FullInfoRecord {
    pub x: DVector<f64>,
    pub g1: DVector<f64>,
    pub y: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrategyNormRecord {
    pub x: DVector<f64>,
    pub g1: DVector<f64>,
    pub y_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientNormRecord {
    pub x: DVector<f64>,
    pub g1: DVector<f64>,
    pub g2_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObservationSet {
    FullInfo(Vec<FullInfoRecord>),
    StrategyNorm(Vec<StrategyNormRecord>),
    GradientNorm(Vec<GradientNormRecord>),
}

impl ObservationSet {
    pub fn model(&self) -> ObservationModel {
        match self {
            ObservationSet::FullInfo(_) => ObservationModel::FullInfo,
            ObservationSet::StrategyNorm(_) => ObservationModel::StrategyNorm,
            ObservationSet::GradientNorm(_) => ObservationModel::GradientNorm,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ObservationSet::FullInfo(r) => r.len(),
            ObservationSet::StrategyNorm(r) => r.len(),
            ObservationSet::GradientNorm(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn observe(traj: &Trajectory, model: ObservationModel) -> ObservationSet {
    match model {
        ObservationModel::FullInfo => ObservationSet::FullInfo(traj.full_info()),
        ObservationModel::StrategyNorm => ObservationSet::StrategyNorm(traj.strategy_norm()),
        ObservationModel::GradientNorm => ObservationSet::GradientNorm(traj.gradient_norm()),
    }
}
