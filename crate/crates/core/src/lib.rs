//! Nash equilibria of bilinear zero-sum and coordination games, recovered
//! from a handful of alternating gradient descent iterations.
//!
//! AltGD conserves a perturbed energy in both game kinds. Differencing that
//! energy across consecutive iterates gives equations that are linear in the
//! unknown equilibrium, so `O(k)` observed updates determine it exactly
//! (modulo conditioning). The crate builds those systems for several
//! observation models, solves them, and benchmarks the result against the
//! classical time-average of the iterates.
//!
//! Module map:
//! - [`game`]: game data, validation, random instances, direct oracle.
//! - [`reduction`]: probability-simplex games to unconstrained ones.
//! - [`dynamics`]: AltGD and observation streams.
//! - [`energy`]: the conserved energies (diagnostic only).
//! - [`equations`]: equation builders.
//! - [`solvers`]: direct, least-squares and Tikhonov solves with diagnostics.
//! - [`pipeline`]: end-to-end runs and the time-average baseline.
//! - [`bench`]: experiment grids and CSV output.

pub mod bench;
pub mod dynamics;
pub mod energy;
pub mod equations;
pub mod error;
pub mod game;
pub mod pipeline;
pub mod reduction;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
pub use game::{GameKind, GameSpec, NashPoint};
