//! Scenario builders, configuration, closed-loop experiments and checks.

mod config;
mod run;
mod scenario;

pub use config::{ExperimentConfig, ProblemKind, SystemKind, OUTPUT_DIR_ENV};
pub use run::{
    benchmark_point, max_achievability, max_gap_violation, max_terminal_norm, relative_deviation, run_benchmark, simulate, subproblem_counts, verify,
    write_benchmark_csv, BenchmarkRow, Check, Simulation, SubproblemCounts, Sweep, VerifyReport, ACHIEVABILITY_TOL, EQUIVALENCE_TOL,
    TERMINAL_TOL,
};
pub use scenario::{
    build_model, build_scenario, initial_state, is_after, Scenario, ScenarioTemplate, Schedule, C2_INPUT_BOUND, C2_STATE_BOUND,
    C4_INPUT_BOUND, C4_POSITION_GAP, S3_ANGLE_GAP, S3_START_TIME,
};
