//! Fuel-constrained two-person stochastic duel.
//!
//! Player A's and player B's fuel drains as independent Poisson processes and
//! the game is inspected at the epochs of a delayed renewal process. This
//! crate evaluates the joint exit-time functional of the game through a
//! bivariate generating-function operator, extracts the decision parameters
//! (shot threshold, mean exit index, mean pre-exit time) and cross-checks
//! everything against an independent Monte Carlo simulator.

pub mod analytic;
pub mod cli;
pub mod error;
pub mod model;
pub mod series;
pub mod simulate;
pub mod transforms;

pub use error::{DuelError, Result};
pub use model::{
    derive_constants, validate_spec, DecisionConstants, ExitRule, FunctionalParams, GameSpec,
    HittingCdf, MarkedProcessSpec, ObservationSpec,
};
pub use transforms::LstFamily;
