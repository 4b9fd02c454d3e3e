//! Stochastic Gauss-Newton methods for compositional problems
//! `min_x phi(F(x)) + g(x)` with `F(x) = E[F(x, xi)]` or a finite average.
//!
//! The crate provides the deterministic prox-linear (Gauss-Newton) baseline, a
//! mini-batch variant (SGN) and a SARAH variance-reduced variant (SGN2), together
//! with the subproblem solvers, batch schedules, stationarity diagnostics and the
//! two benchmark problem families (nonlinear least squares for classification and
//! smoothed CVaR asset allocation).

pub mod algorithms;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod outer;
pub mod problem;
pub mod problems;
pub mod regularizer;
pub mod subsolver;

pub use algorithms::{run, run_gn, run_sgn, run_sgn2, Algorithm, RunConfig, RunTrace};
pub use error::{Error, Result};
pub use outer::{OuterFunction, OuterKind};
pub use problem::{CompositionProblem, ProblemConstants, SampleCount, SampleOracle};
pub use regularizer::Regularizer;
