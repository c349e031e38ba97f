//! Mixed-binary conic programs (linear objective, linear rows, second-order
//! cones) and the continuous solvers used for their relaxations.

mod barrier;
mod dump;
mod program;
mod solve;

pub use barrier::DenseBarrierSolver;
pub use dump::to_cbf;
pub use program::{
    Affine, ConeBlock, ConicProgram, LinearRow, ProgramError, Sense, SocAtom, VarId, VarKind,
    VarTag, Variable,
};
pub use solve::{
    primal_residual, solve_relaxation, verify, ContinuousSolution, Fixings, InteriorPointSolver,
    RelaxationSolver, Residuals, SolveStatus, SolverHandle, Tolerances,
};
