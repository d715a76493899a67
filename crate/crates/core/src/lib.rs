//! Planning toolkit for intermittent connectivity in multi-agent teams.
//!
//! The crate is organised bottom-up: [`network`] holds the environment graph,
//! [`problem`] a single planning instance, [`ilp`] turns an instance into a
//! solver-neutral MILP, [`solver`] runs it, and [`verify`] checks the result
//! without trusting the solver. [`baselines`], [`cluster`] and [`explore`]
//! build on those.

pub mod baselines;
pub mod cluster;
pub mod explore;
pub mod ilp;
pub mod network;
pub mod problem;
pub mod scalar;
pub mod solver;
pub mod verify;

pub use ilp::{assemble, MilpModel, VarKey};
pub use network::{MobilityCommNetwork, NetworkBuilder, NetworkError, StateId};
pub use problem::{AgentConfig, Extensions, FlowOrientation, ProblemError, ProblemSpec};
pub use scalar::Scalar;
pub use solver::{solve, Backend, Limits, SolveResult, SolveStatus};
pub use verify::PlanSolution;

pub type Network = MobilityCommNetwork<f64>;
pub type Network32 = MobilityCommNetwork<f32>;
pub type Problem = ProblemSpec<f64>;
pub type Problem32 = ProblemSpec<f32>;
