//! Probability-simplex games and their unconstrained equivalents.
//!
//! Eliminating the last coordinate, `x_k = 1 - <1, x̃>`, turns
//! `max_{x ∈ Δᵏ} <x, A y>` into `max <x̃, Ã ỹ - b̃1>` over the affine hull
//! `R^{k-1}` (up to terms agent 1 does not control), with
//!
//! ```text
//! Ã  = A[..n, ..n] - A[..n, k] 1ᵀ - 1 A[k, ..n] + A[k, k] 1 1ᵀ
//! b̃1 = 1 A[k, k] - A[..n, k]
//! ```
//!
//! and `B̃, b̃2` built the same way from `B`. An interior (fully mixed)
//! equilibrium of the simplex game is exactly the lifted equilibrium of the
//! reduced game.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{matrix_from_rows, matrix_rows, GameKind, GameSpec, Rates};
use crate::rng;

/// Coordinates above this count as strictly positive.
pub const INTERIOR_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "SimplexGameJson", try_from = "SimplexGameJson")]
pub struct SimplexGame {
    pub a: DMatrix<f64>,
    pub kind: GameKind,
}

impl SimplexGame {
    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    pub fn b_matrix(&self) -> DMatrix<f64> {
        self.a.transpose() * self.kind.sign()
    }
}

#[derive(Serialize, Deserialize)]
struct SimplexGameJson {
    k: usize,
    kind: GameKind,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
}

impl From<SimplexGame> for SimplexGameJson {
    fn from(g: SimplexGame) -> Self {
        SimplexGameJson { k: g.k(), kind: g.kind, a: matrix_rows(&g.a) }
    }
}

impl TryFrom<SimplexGameJson> for SimplexGame {
    type Error = String;

    fn try_from(j: SimplexGameJson) -> std::result::Result<Self, String> {
        let a = matrix_from_rows(&j.a).map_err(|e| e.to_string())?;
        if a.nrows() != j.k || a.ncols() != j.k {
            return Err(format!("\"A\" is {}x{} but k = {}", a.nrows(), a.ncols(), j.k));
        }
        Ok(SimplexGame { a, kind: j.kind })
    }
}

/// Random simplex game with `A ~ U(-1,1)^{k×k}`.
pub fn generate_simplex_game(k: usize, kind: GameKind, seed: u64) -> SimplexGame {
    let mut rng = rng::stream(seed, rng::GAME_STREAM);
    SimplexGame { a: rng::uniform_matrix(&mut rng, k, -1.0, 1.0), kind }
}

/// `(M̃, b̃)` for one agent's payoff matrix `M`.
pub fn eliminate_last(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = m.nrows() - 1;
    let corner = m[(n, n)];
    let reduced = DMatrix::from_fn(n, n, |i, j| m[(i, j)] - m[(i, n)] - m[(n, j)] + corner);
    let cost = DVector::from_fn(n, |i, _| corner - m[(i, n)]);
    (reduced, cost)
}

/// Unconstrained game of dimension `k - 1` with the given learning rates.
pub fn reduce(g: &SimplexGame, rates: Rates) -> Result<GameSpec> {
    if g.k() < 2 {
        return Err(Error::NothingToReduce);
    }
    let (a, b1) = eliminate_last(&g.a);
    let (b_reduced, b2) = eliminate_last(&g.b_matrix());
    debug_assert!((&b_reduced - a.transpose() * g.kind.sign()).amax() <= 1e-12 * (1.0 + a.amax()));
    GameSpec::new(a, b1, b2, g.kind, rates.eta1, rates.eta2)
}

/// Appends `1 - <1, ṽ>`.
pub fn lift_vector(v: &DVector<f64>) -> DVector<f64> {
    let last = 1.0 - v.sum();
    DVector::from_iterator(v.len() + 1, v.iter().copied().chain(std::iter::once(last)))
}

pub fn is_interior(v: &DVector<f64>) -> bool {
    v.iter().all(|&c| c > INTERIOR_TOL)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lifted {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Both strategies lie in the relative interior of the simplex.
    pub interior: bool,
}

pub fn lift(x_tilde: &DVector<f64>, y_tilde: &DVector<f64>) -> Lifted {
    let (x, y) = (lift_vector(x_tilde), lift_vector(y_tilde));
    let interior = is_interior(&x) && is_interior(&y);
    Lifted { x: x.as_slice().to_vec(), y: y.as_slice().to_vec(), interior }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::oracle_nash;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    const RATES: Rates = Rates { eta1: 0.1, eta2: 0.1 };

    #[test]
    fn matching_pennies() {
        let g = SimplexGame { a: dmatrix![1.0, -1.0; -1.0, 1.0], kind: GameKind::ZeroSum };
        let r = reduce(&g, RATES).unwrap();
        assert_eq!(r.a, dmatrix![4.0]);
        assert_eq!(r.b1, dvector![2.0]);
        assert_eq!(r.b2, dvector![-2.0]);
        let ne = oracle_nash(&r).unwrap();
        let l = lift(&ne.x_star, &ne.y_star);
        assert_eq!(l.x, vec![0.5, 0.5]);
        assert_eq!(l.y, vec![0.5, 0.5]);
        assert!(l.interior);
    }

    #[test]
    fn zero_game_reduces_to_zero() {
        let g = SimplexGame { a: DMatrix::zeros(4, 4), kind: GameKind::Coordination };
        let r = reduce(&g, RATES).unwrap();
        assert_eq!(r.a, DMatrix::zeros(3, 3));
        assert_eq!(r.b1, DVector::zeros(3));
        assert_eq!(r.b2, DVector::zeros(3));
    }

    #[test]
    fn nothing_to_reduce() {
        let g = SimplexGame { a: dmatrix![1.0], kind: GameKind::ZeroSum };
        assert!(matches!(reduce(&g, RATES), Err(Error::NothingToReduce)));
    }

    #[test]
    fn kind_is_preserved() {
        for kind in [GameKind::ZeroSum, GameKind::Coordination] {
            let g = generate_simplex_game(4, kind, 9);
            let r = reduce(&g, RATES).unwrap();
            // B̃ from B = ±Aᵀ directly, compared to ±Ãᵀ.
            let (b_reduced, _) = eliminate_last(&g.b_matrix());
            assert!((b_reduced - r.b_matrix()).amax() <= 1e-12);
        }
    }

    #[test]
    fn lift_examples() {
        let l = lift_vector(&dvector![0.25, 0.25]);
        assert_eq!(l, dvector![0.25, 0.25, 0.5]);
        assert!(is_interior(&l));
        let l = lift(&dvector![1.5], &dvector![0.5]);
        assert_eq!(l.x, vec![1.5, -0.5]);
        assert!(!l.interior);
    }

    #[test]
    fn json_round_trip() {
        let g = generate_simplex_game(3, GameKind::ZeroSum, 1);
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.starts_with("{\"k\":3,\"kind\":\"zero-sum\",\"A\":"));
        assert_eq!(serde_json::from_str::<SimplexGame>(&s).unwrap(), g);
    }

    fn simplex_point(raw: &[f64]) -> DVector<f64> {
        let total: f64 = raw.iter().sum();
        DVector::from_iterator(raw.len(), raw.iter().map(|v| v / total))
    }

    proptest! {
        #[test]
        fn lift_inverts_dropping_the_last_coordinate(raw in prop::collection::vec(0.01f64..1.0, 2..8)) {
            let mut x = simplex_point(&raw);
            // Make the last coordinate exactly 1 - sum of the rest.
            let n = x.len() - 1;
            x[n] = 1.0 - x.rows(0, n).sum();
            let lifted = lift_vector(&x.rows(0, n).into_owned());
            prop_assert_eq!(lifted, x);
        }

        #[test]
        fn payoff_difference_depends_only_on_y(
            seed in 0u64..1000,
            xa in prop::collection::vec(0.01f64..1.0, 4),
            xb in prop::collection::vec(0.01f64..1.0, 4),
            yr in prop::collection::vec(0.01f64..1.0, 4),
        ) {
            let g = generate_simplex_game(4, GameKind::ZeroSum, seed);
            let r = reduce(&g, RATES).unwrap();
            let y = simplex_point(&yr);
            let y_tilde = y.rows(0, 3).into_owned();
            let diff = |xr: &[f64]| {
                let x = simplex_point(xr);
                let x_tilde = x.rows(0, 3).into_owned();
                x.dot(&(&g.a * &y)) - x_tilde.dot(&(&r.a * &y_tilde - &r.b1))
            };
            prop_assert!((diff(&xa) - diff(&xb)).abs() < 1e-12);
        }
    }
}
