//! Regularized solver and verification harness for the two-dimensional
//! orthotropic (pseudo) p-Laplace equation
//!
//! ```text
//! Σᵢ ∂ᵢ( |∂ᵢu|^{p−2} ∂ᵢu ) = 0,    1 < p < 2,
//! ```
//!
//! approximated by minimizers `u^ε` of the smooth convex energy
//! `Σᵢ ∫ (|∂ᵢv|² + ε)^{p/2} / p` on a uniform square grid.
//!
//! * [`geometry`]: grids, concentric balls, discrete circles, cutoffs.
//! * [`fields`]: node fields, cell gradients, ball integrals, oscillation.
//! * [`energy`]: discrete energy, first and second variations.
//! * [`solver`]: Newton–CG minimization and the ε-continuation ladder.
//! * [`verify`]: measured-ratio checks of the interior estimates, the
//!   derivative min/max principle, Lebesgue's oscillation lemma and the
//!   logarithmic modulus of continuity.
//! * [`scenario`]: the standard boundary-data suite.
//!
//! The `parallel` feature (on by default) runs cell loops and sweeps on
//! rayon. All reductions are order-fixed, so results do not depend on the
//! feature or the thread count.

// `!(x <= y)` is deliberate: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod par;
pub mod scenario;
pub mod solver;
pub mod verify;

pub use energy::EnergyParams;
pub use error::{Error, Result};
pub use fields::{Axis, GradientField, ScalarField};
pub use geometry::{BallSpec, CellRegion, Cutoff, Grid};
pub use solver::{LadderReport, SolveConfig, SolveReport};
pub use verify::{EstimateReport, OscillationProfile};
