//! Two-stage stochastic quadratic games posed as linear complementarity
//! problems, with progressive hedging (PHA) and a two-step alternating
//! scheme (ABA).

pub mod bench;
pub mod cli;
pub mod error;
pub mod game;
pub mod generator;
pub mod lcp;
pub mod market;
pub mod second_stage;
pub mod solvers;

pub use error::{Error, Result};
pub use game::{FirstStageParams, ScenarioData, StackedPoint, TwoStageGame};
pub use generator::{generate_instance, GeneratorSpec};
pub use lcp::{LcpProblem, LcpSolution};
pub use solvers::{solve_aba, solve_pha, EquilibriumSolution, SolverConfig};
