//! Centralized oracle and receding-horizon driver.

mod closed_loop;
mod oracle;

pub use closed_loop::{closed_loop_cost, receding_horizon, write_stats_csv, write_trajectory_csv, Controller, HaltedRun, RunRecord, StepStats};
pub use oracle::{assemble_global, solve_centralized, solve_centralized_with, CentralizedSolution, CondensedOracle, GlobalQp};
