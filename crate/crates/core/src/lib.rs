//! Uncapacitated single-allocation hub location with variable-size
//! neighborhoods.
//!
//! Hubs may be placed anywhere inside a dilated neighborhood of their node;
//! the dilation is a decision with its own set-up cost. The crate builds two
//! mixed-binary conic formulations of the problem, solves them with a
//! branch-and-cut engine over an interior-point relaxation solver, and ships
//! a brute-force oracle for tiny instances.

pub mod bnc;
pub mod conic;
pub mod formulations;
pub mod geometry;
pub mod instance;
pub mod oracle;
pub mod solution;

pub use bnc::{solve_bnc, BncConfig, BncStats, CutPolicy, CutRecord, TerminationStatus};
pub use conic::{ConicProgram, SolveStatus, SolverHandle, Tolerances};
pub use formulations::{build_f1, build_f1_split_nu, build_f2_master, FormulationOptions};
pub use geometry::{NeighborhoodSpec, NormKind, Point};
pub use instance::{Instance, RawData, ScenarioGrid, ScenarioParams, VariableSetupCost};
pub use oracle::brute_force;
pub use solution::{evaluate_solution, CostBreakdown, HubSolution};
