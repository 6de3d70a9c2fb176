//! Perturbed energies conserved by alternating gradient descent.
//!
//! With the equilibrium `(x*, y*)` known:
//!
//! ```text
//! zero-sum:      h- = |x-x*|²/eta1 + |y-y*|²/eta2 + <x, Ay-b1> + <y, b2>
//! coordination:  h+ = |x-x*|²/eta1 - |y-y*|²/eta2 + <x, Ay-b1> - <y, b2>
//! ```
//!
//! Both are exactly invariant along AltGD orbits. They need the true
//! equilibrium, so this module is diagnostic only; the equation builders
//! never call into it.

use nalgebra::DVector;
use serde::Serialize;

use crate::dynamics::{self, Trajectory};
use crate::error::{Error, Result};
use crate::game::{GameKind, GameSpec, NashPoint};

/// Default relative drift tolerance for float64 runs of up to 10⁴ steps.
pub const DEFAULT_DRIFT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EnergyKind {
    /// `h-`, zero-sum games.
    Minus,
    /// `h+`, coordination games.
    Plus,
}

impl From<GameKind> for EnergyKind {
    fn from(kind: GameKind) -> Self {
        match kind {
            GameKind::ZeroSum => EnergyKind::Minus,
            GameKind::Coordination => EnergyKind::Plus,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergySample {
    pub t: usize,
    pub h: f64,
    /// Sum of the magnitudes of the four terms of `h`; roundoff in `h` is
    /// proportional to it.
    pub scale: f64,
    pub kind: EnergyKind,
}

fn require_kind(spec: &GameSpec, expected: GameKind) -> Result<()> {
    if spec.kind != expected {
        return Err(Error::KindMismatch { expected: expected.name(), found: spec.kind.name() });
    }
    Ok(())
}

fn energy_terms(spec: &GameSpec, nash: &NashPoint, x: &DVector<f64>, y: &DVector<f64>) -> [f64; 4] {
    [
        (x - &nash.x_star).norm_squared() / spec.eta1,
        (y - &nash.y_star).norm_squared() / spec.eta2,
        x.dot(&spec.grad1(y)),
        y.dot(&spec.b2),
    ]
}

pub fn energy_minus(spec: &GameSpec, nash: &NashPoint, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    require_kind(spec, GameKind::ZeroSum)?;
    let [dx, dy, pay, cost] = energy_terms(spec, nash, x, y);
    Ok(dx + dy + pay + cost)
}

pub fn energy_plus(spec: &GameSpec, nash: &NashPoint, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    require_kind(spec, GameKind::Coordination)?;
    let [dx, dy, pay, cost] = energy_terms(spec, nash, x, y);
    Ok(dx - dy + pay - cost)
}

/// The energy matching the game's kind.
pub fn energy(spec: &GameSpec, nash: &NashPoint, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let r = match spec.kind {
        GameKind::ZeroSum => energy_minus(spec, nash, x, y),
        GameKind::Coordination => energy_plus(spec, nash, x, y),
    };
    r.expect("kind selected from spec")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub kind: EnergyKind,
    pub h0: f64,
    /// `max_t |h_t - h_0| / (1 + max(s_0, s_t))`, where `s_t` is the
    /// [`EnergySample::scale`] at step `t`.
    pub max_relative_drift: f64,
    /// Relative drift of each step, normalized the same way.
    pub step_drifts: Vec<f64>,
}

impl InvarianceReport {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.max_relative_drift <= tolerance
    }
}

pub fn energy_series(traj: &Trajectory, spec: &GameSpec, nash: &NashPoint) -> Vec<EnergySample> {
    let kind = EnergyKind::from(spec.kind);
    traj.xs
        .iter()
        .zip(&traj.ys)
        .enumerate()
        .map(|(t, (x, y))| {
            let scale = energy_terms(spec, nash, x, y).iter().map(|v| v.abs()).sum();
            EnergySample { t, h: energy(spec, nash, x, y), scale, kind }
        })
        .collect()
}

pub fn check_invariance(traj: &Trajectory, spec: &GameSpec, nash: &NashPoint) -> InvarianceReport {
    let series = energy_series(traj, spec, nash);
    let first = series[0];
    let h0 = first.h;
    let max_relative_drift = series
        .iter()
        .map(|s| (s.h - h0).abs() / (1.0 + first.scale.max(s.scale)))
        .fold(0.0, f64::max);
    let step_drifts = series
        .windows(2)
        .map(|w| (w[1].h - w[0].h).abs() / (1.0 + w[0].scale.max(w[1].scale)))
        .collect();
    InvarianceReport { kind: EnergyKind::from(spec.kind), h0, max_relative_drift, step_drifts }
}

/// Residuals of the per-agent distance identities after one step:
///
/// ```text
/// (|x'-x*|² - |x-x*|²)/eta1 = <x' + x - 2x*, A(y - y*)>
/// (|y'-y*|² - |y-y*|²)/eta2 = <y' + y - 2y*, B(x' - x*)>
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepIdentityResiduals {
    pub agent1: f64,
    pub agent2: f64,
    /// Largest magnitude among the four sides, for relative comparisons.
    pub scale: f64,
}

pub fn step_identity_check(
    spec: &GameSpec,
    nash: &NashPoint,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<StepIdentityResiduals> {
    let (x1, y1) = dynamics::step(spec, x, y)?;
    let (xs, ys) = (&nash.x_star, &nash.y_star);
    let lhs1 = ((&x1 - xs).norm_squared() - (x - xs).norm_squared()) / spec.eta1;
    let rhs1 = (&x1 + x - xs * 2.0).dot(&(&spec.a * (y - ys)));
    let lhs2 = ((&y1 - ys).norm_squared() - (y - ys).norm_squared()) / spec.eta2;
    let rhs2 = (&y1 + y - ys * 2.0).dot(&spec.apply_b(&(&x1 - xs)));
    Ok(StepIdentityResiduals {
        agent1: (lhs1 - rhs1).abs(),
        agent2: (lhs2 - rhs2).abs(),
        scale: lhs1.abs().max(rhs1.abs()).max(lhs2.abs()).max(rhs2.abs()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::simulate;
    use crate::game::{generate_instance, oracle_nash};
    use nalgebra::{dmatrix, dvector};

    fn scalar_game() -> (GameSpec, NashPoint) {
        let spec =
            GameSpec::new(dmatrix![2.0], dvector![2.0], dvector![-2.0], GameKind::ZeroSum, 0.5, 0.5)
                .unwrap();
        let ne = oracle_nash(&spec).unwrap();
        (spec, ne)
    }

    #[test]
    fn hand_values() {
        let (spec, ne) = scalar_game();
        assert_eq!(energy_minus(&spec, &ne, &dvector![0.0], &dvector![0.0]).unwrap(), 4.0);
        assert_eq!(energy_minus(&spec, &ne, &dvector![1.0], &dvector![1.0]).unwrap(), -2.0);
        assert_eq!(energy_minus(&spec, &ne, &dvector![-1.0], &dvector![2.0]).unwrap(), 4.0);
    }

    #[test]
    fn kind_mismatch() {
        let (spec, ne) = scalar_game();
        assert!(matches!(
            energy_plus(&spec, &ne, &dvector![0.0], &dvector![0.0]),
            Err(Error::KindMismatch { .. })
        ));
    }

    #[test]
    fn plus_at_nash_and_sign_contrast() {
        let spec = generate_instance(3, GameKind::Coordination, 1.0, 5).unwrap();
        let ne = oracle_nash(&spec).unwrap();
        let h = energy_plus(&spec, &ne, &ne.x_star, &ne.y_star).unwrap();
        assert!((h + ne.y_star.dot(&spec.b2)).abs() < 1e-12);

        let x = dvector![0.3, -0.1, 0.7];
        let y = dvector![-0.4, 0.2, 0.9];
        let hp = energy_plus(&spec, &ne, &x, &y).unwrap();
        let zs = GameSpec { kind: GameKind::ZeroSum, ..spec.clone() };
        let hm = energy_minus(&zs, &ne, &x, &y).unwrap();
        let dy = (&y - &ne.y_star).norm_squared() / spec.eta2;
        let cost = y.dot(&spec.b2);
        assert!((hm - hp - 2.0 * (dy + cost)).abs() < 1e-12 * (1.0 + hm.abs()));
    }

    #[test]
    fn hand_trace_is_conserved() {
        let (spec, ne) = scalar_game();
        let traj = simulate(&spec, &dvector![0.0], &dvector![0.0], 2).unwrap();
        let r = check_invariance(&traj, &spec, &ne);
        assert_eq!(r.h0, 4.0);
        assert_eq!(r.max_relative_drift, 0.0);
        assert_eq!(r.step_drifts.len(), 2);
    }

    #[test]
    fn conservation_on_random_games() {
        let cases = [(10, GameKind::ZeroSum, 1000), (5, GameKind::Coordination, 100)];
        for (k, kind, updates) in cases {
            let spec = generate_instance(k, kind, 1.0, 21).unwrap();
            let ne = oracle_nash(&spec).unwrap();
            let x0 = DVector::from_element(k, 0.5);
            let y0 = DVector::from_element(k, -0.25);
            let traj = simulate(&spec, &x0, &y0, updates).unwrap();
            let r = check_invariance(&traj, &spec, &ne);
            assert!(r.holds(DEFAULT_DRIFT_TOLERANCE), "{kind}: drift {}", r.max_relative_drift);
        }
    }

    #[test]
    fn step_identity_residuals() {
        let (spec, ne) = scalar_game();
        let r = step_identity_check(&spec, &ne, &dvector![0.0], &dvector![0.0]).unwrap();
        assert_eq!((r.agent1, r.agent2), (0.0, 0.0));
        let r = step_identity_check(&spec, &ne, &ne.x_star, &ne.y_star).unwrap();
        assert_eq!((r.agent1, r.agent2, r.scale), (0.0, 0.0, 0.0));

        for kind in [GameKind::ZeroSum, GameKind::Coordination] {
            let spec = generate_instance(8, kind, 1.0, 33).unwrap();
            let ne = oracle_nash(&spec).unwrap();
            let traj = simulate(&spec, &DVector::from_element(8, 0.1), &DVector::from_element(8, 0.2), 20)
                .unwrap();
            for t in 0..20 {
                let r = step_identity_check(&spec, &ne, &traj.xs[t], &traj.ys[t]).unwrap();
                let tol = 1e-10 * (1.0 + r.scale);
                assert!(r.agent1 <= tol && r.agent2 <= tol, "{kind} t={t}: {r:?}");
            }
        }
    }
}
