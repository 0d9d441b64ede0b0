//! Distributed ADMM over the rows and columns of the system response.

mod agent;
mod dual;
mod layout;
mod params;
mod row;
mod solver;

pub use agent::Agent;
pub use dual::{column_update, converged, dual_update, residuals};
pub use layout::{build_column_projector, local_achievability, row_owner, ColumnLayout, RowLayout};
pub use params::AdmmParams;
pub use row::{row_update, ConsensusTarget, LocalProblem, RowSolution, RowSolver};
pub use solver::{solve, write_iteration_csv, Algorithm, DistributedController, IterationRecord, SolveOptions, SolveOutput, SolveStats};
