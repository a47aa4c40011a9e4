//! Solvers for entropic vector quantile regression between a discrete
//! reference measure and a discrete joint law of covariates and responses.
//!
//! Two iterations are provided: [`vanilla`] solves the mean-independence
//! equation for the vector potential exactly at every step, and
//! [`modified`] replaces that solve by a single projected gradient step.
//! [`bounds`] computes the constants of the convergence theory and
//! [`gaussian`] the closed-form optimal value for Gaussian data.

pub mod bounds;
pub mod dual;
pub mod error;
pub mod estimators;
pub mod gaussian;
pub mod io;
pub mod modified;
pub mod numerics;
pub mod potentials;
pub mod problem;
pub mod projection;
pub mod solver;
pub mod trace;
pub mod vanilla;

pub use dual::{coupling, dual_objective, iota, neg_gradients, primal_objective, residuals, Coupling, ExpMode, Residuals};
pub use error::{Error, Result};
pub use potentials::Potentials;
pub use problem::{compute_cost_matrix, DiscreteProblem};
pub use solver::{solve, Radius, Solution, SolverConfig, StepSize};
pub use trace::{IterateTrace, Mode};
pub use gaussian::{gaussian_dual_value, sample_gaussian_problem, GaussianModel};
