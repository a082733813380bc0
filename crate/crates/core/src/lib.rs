//! Composite equilibria of EV charging games.
//!
//! A population of electric vehicles picks charging windows over a day with
//! a non-EV base load. Some vehicles are coordinated by coalitions that
//! minimise their total cost; the rest act individually. The crate evaluates
//! costs of such games, solves them by exponential learning, solves the
//! three-slot case in closed form, certifies the results and sweeps the
//! coalition size.

pub mod analytic3;
pub mod costfn;
pub mod dynamics;
pub mod error;
pub mod model;
mod roots;
pub mod sweep;
pub mod verify;

pub use analytic3::{Regime, ThreeSlotEquilibrium, ThreeSlotInstance};
pub use costfn::CostFamily;
pub use dynamics::{solve_dynamics, DynamicsOptions, StepSize};
pub use error::{Error, Result};
pub use model::{Flow, GameSpec, Profile};
pub use sweep::{run_sweep, run_sweep_with_jobs, SweepBase, SweepResult, SweepSolver};
pub use verify::{EquilibriumReport, SolverStatus};
