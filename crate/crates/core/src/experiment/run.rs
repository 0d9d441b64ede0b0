use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;

use super::{build_model, build_scenario, is_after, ExperimentConfig, ProblemKind, Scenario, S3_ANGLE_GAP, S3_START_TIME};
use crate::admm::{write_iteration_csv, DistributedController};
use crate::agents::{write_message_csv, AuditReport};
use crate::consensus::write_inner_csv;
use crate::error::Result;
use crate::model::build_interconnection_graph;
use crate::reference::{closed_loop_cost, receding_horizon, write_stats_csv, write_trajectory_csv, Controller, RunRecord};
use crate::sls::{check_localizability, HorizonSpec};

/// `||a - b||_inf / (1 + ||b||_inf)`.
pub fn relative_deviation(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}

/// Closed-loop runs of the distributed controller and the oracle from the same state.
pub struct Simulation {
    pub scenario: Scenario<f64>,
    pub controller: DistributedController<f64>,
    pub dlmpc: RunRecord<f64>,
    pub oracle: RunRecord<f64>,
}

impl Simulation {
    /// Relative state deviation from the oracle at every real time step.
    pub fn deviations(&self) -> Vec<f64> {
        self.dlmpc.states.iter().zip(&self.oracle.states).map(|(d, c)| relative_deviation(d, c)).collect()
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviations().into_iter().fold(0.0, f64::max)
    }

    pub fn costs(&self) -> (f64, f64) {
        let part = self.scenario.model().partition();
        let stages = &self.scenario.template.stages;
        (closed_loop_cost(&self.dlmpc, stages, part), closed_loop_cost(&self.oracle, stages, part))
    }

    /// Writes trajectory, stats, iteration, inner-loop and message CSVs into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let part = self.scenario.model().partition();
        let open = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
        write_trajectory_csv(open("trajectory.csv")?, &self.dlmpc, part)?;
        write_trajectory_csv(open("oracle_trajectory.csv")?, &self.oracle, part)?;
        let stats: Vec<_> = self.dlmpc.stats.iter().chain(&self.oracle.stats).cloned().collect();
        write_stats_csv(open("stats.csv")?, &stats)?;
        let records: Vec<_> = self.dlmpc.solves.iter().flat_map(|s| s.records.iter().copied()).collect();
        write_iteration_csv(open("iterations.csv")?, &records)?;
        let inner: Vec<_> = self.dlmpc.solves.iter().flat_map(|s| s.inner.iter().copied()).collect();
        write_inner_csv(open("inner.csv")?, &inner)?;
        write_message_csv(open("messages.csv")?, self.controller.network(), &self.controller.access_logs())?;
        Ok(())
    }
}

/// Runs the configured scenario in closed loop with the distributed
/// controller and with the oracle.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation> {
    let scenario = build_scenario::<f64>(cfg)?;
    let mut controller = Controller::Distributed(Box::new(scenario.controller(cfg)?));
    let model = scenario.model().clone();
    let dlmpc = receding_horizon(&mut controller, &scenario.template, &model, scenario.x0.clone(), cfg.steps, &[])?;
    let mut oracle = Controller::Centralized(scenario.oracle()?);
    let oracle = receding_horizon(&mut oracle, &scenario.template, &model, scenario.x0.clone(), cfg.steps, &[])?;
    let Controller::Distributed(controller) = controller else { unreachable!("built as distributed above") };
    Ok(Simulation { scenario, controller: *controller, dlmpc, oracle })
}

/// Sweep axis of a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    /// Network sizes from `sweep_subsystems` at the configured locality.
    Subsystems,
    /// Localities from `sweep_locality` at the configured network size.
    Locality,
}

/// Sizes of one agent's row and column subproblems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubproblemCounts {
    pub row_variables: usize,
    pub row_constraints: usize,
    pub column_variables: usize,
    pub column_constraints: usize,
}

/// One benchmark point.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub case: ProblemKind,
    pub subsystems: usize,
    pub locality: usize,
    pub horizon: usize,
    pub steps: usize,
    /// Simulated-parallel time per ADMM iteration over warm-started steps,
    /// from per-agent median phase times.
    pub iteration_ms: f64,
    /// Same from the raw slowest agent of every phase.
    pub raw_iteration_ms: f64,
    pub mean_iterations: f64,
    /// Largest per-agent traffic per ADMM iteration.
    pub bytes_per_agent_iteration: f64,
    /// Counts of every agent, indexed by subsystem.
    pub counts: Vec<SubproblemCounts>,
}

impl BenchmarkRow {
    /// Largest count of each kind over the agents.
    pub fn max_counts(&self) -> SubproblemCounts {
        self.counts.iter().fold(SubproblemCounts { row_variables: 0, row_constraints: 0, column_variables: 0, column_constraints: 0 }, |a, c| {
            SubproblemCounts {
                row_variables: a.row_variables.max(c.row_variables),
                row_constraints: a.row_constraints.max(c.row_constraints),
                column_variables: a.column_variables.max(c.column_variables),
                column_constraints: a.column_constraints.max(c.column_constraints),
            }
        })
    }

    /// Distinct per-agent counts, sorted.
    pub fn distinct_counts(&self) -> Vec<SubproblemCounts> {
        let mut v = self.counts.clone();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Subproblem sizes of every agent of `scenario` without solving anything.
pub fn subproblem_counts(scenario: &Scenario<f64>, controller: &DistributedController<f64>) -> Result<Vec<SubproblemCounts>> {
    let problem = scenario.problem()?;
    Ok(controller
        .agents()
        .iter()
        .zip(&problem.objectives)
        .map(|(a, obj)| SubproblemCounts {
            row_variables: a.row_layout().unknowns(),
            row_constraints: obj.constraints.inequalities() + obj.constraints.equalities(),
            column_variables: a.projector().unknowns(),
            column_constraints: a.projector().constraints(),
        })
        .collect())
}

/// Builds and runs one benchmark point.
pub fn benchmark_point(cfg: &ExperimentConfig) -> Result<BenchmarkRow> {
    let scenario = build_scenario::<f64>(cfg)?;
    let controller = scenario.controller(cfg)?;
    let counts = subproblem_counts(&scenario, &controller)?;
    let mut c = Controller::Distributed(Box::new(controller));
    let model = scenario.model().clone();
    let record = receding_horizon(&mut c, &scenario.template, &model, scenario.x0.clone(), cfg.steps, &[])?;
    let warm: Vec<_> = record.solves.iter().skip(1).collect();
    let warm = if warm.is_empty() { record.solves.iter().collect() } else { warm };
    let iters: usize = warm.iter().map(|s| s.iterations).sum();
    let time: f64 = warm.iter().map(|s| s.typical_time().as_secs_f64() * 1e3).sum();
    let raw: f64 = warm.iter().map(|s| s.parallel_time().as_secs_f64() * 1e3).sum();
    let all_iters: usize = record.solves.iter().map(|s| s.iterations).sum();
    let Controller::Distributed(controller) = c else { unreachable!("built as distributed above") };
    let max_bytes = controller.network().totals().iter().map(|t| t.1).max().unwrap_or(0);
    Ok(BenchmarkRow {
        case: scenario.kind,
        subsystems: model.count(),
        locality: cfg.locality,
        horizon: cfg.horizon(),
        steps: cfg.steps,
        iteration_ms: time / iters.max(1) as f64,
        raw_iteration_ms: raw / iters.max(1) as f64,
        mean_iterations: iters as f64 / warm.len().max(1) as f64,
        bytes_per_agent_iteration: max_bytes as f64 / all_iters.max(1) as f64,
        counts,
    })
}

/// Runs every case of `cfg.cases` at every point of the sweep.
pub fn run_benchmark(cfg: &ExperimentConfig, sweep: Sweep) -> Result<Vec<BenchmarkRow>> {
    let points: Vec<(usize, usize)> = match sweep {
        Sweep::Subsystems => cfg.sweep_subsystems.iter().map(|&n| (n, cfg.locality)).collect(),
        Sweep::Locality => cfg.sweep_locality.iter().map(|&d| (cfg.subsystems, d)).collect(),
    };
    let mut rows = Vec::new();
    for &case in &cfg.cases {
        for &(n, d) in &points {
            let point = ExperimentConfig { subsystems: n, locality: d, problem: case, ..cfg.clone() };
            rows.push(benchmark_point(&point)?);
        }
    }
    Ok(rows)
}

/// Runtime CSV, one line per point with the largest per-agent counts.
pub fn write_benchmark_csv<W: Write>(out: W, rows: &[BenchmarkRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "case",
        "subsystems",
        "locality",
        "horizon",
        "steps",
        "iteration_ms",
        "raw_iteration_ms",
        "mean_iterations",
        "bytes_per_agent_iteration",
        "row_variables",
        "row_constraints",
        "column_variables",
        "column_constraints",
    ])?;
    for r in rows {
        let c = r.max_counts();
        w.write_record([
            r.case.to_string(),
            r.subsystems.to_string(),
            r.locality.to_string(),
            r.horizon.to_string(),
            r.steps.to_string(),
            format!("{:.6}", r.iteration_ms),
            format!("{:.6}", r.raw_iteration_ms),
            format!("{:.3}", r.mean_iterations),
            format!("{:.1}", r.bytes_per_agent_iteration),
            c.row_variables.to_string(),
            c.row_constraints.to_string(),
            c.column_variables.to_string(),
            c.column_constraints.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Tolerance on the relative closed-loop deviation from the oracle.
pub const EQUIVALENCE_TOL: f64 = 1e-3;
/// Tolerance on the achievability residual of `Psi`.
pub const ACHIEVABILITY_TOL: f64 = 1e-9;
/// Tolerance on predicted terminal states under `x_T = 0`.
pub const TERMINAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub audit: Option<AuditReport>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(Check { name, passed, detail });
    }
}

/// Largest `||x_T||_2` over the predictions of a run.
pub fn max_terminal_norm(record: &RunRecord<f64>, h: &HorizonSpec) -> f64 {
    let n = h.n();
    record.predictions.iter().map(|p| p.rows(h.x_row(h.horizon(), 0), n).norm()).fold(0.0, f64::max)
}

/// Largest achievability residual of `Psi` over every iteration of a run,
/// from the global assembly when it was recorded.
pub fn max_achievability(record: &RunRecord<f64>) -> f64 {
    record
        .solves
        .iter()
        .flat_map(|s| if s.assembled_achievability.is_empty() { &s.achievability } else { &s.assembled_achievability })
        .copied()
        .fold(0.0, f64::max)
}

/// Largest `|theta_i - theta_j| - gap` over coupled pairs and real times past the start time.
pub fn max_gap_violation(scenario: &Scenario<f64>, record: &RunRecord<f64>) -> Result<f64> {
    let model = scenario.model();
    let graph = build_interconnection_graph(model, 0.0);
    let part = model.partition();
    let mut worst = f64::NEG_INFINITY;
    for (t, x) in record.states.iter().enumerate() {
        if !is_after(t, model.dt(), S3_START_TIME) {
            continue;
        }
        for (i, j) in graph.edges() {
            if i != j {
                let gap = (x[part.state_range(i).start] - x[part.state_range(j).start]).abs();
                worst = worst.max(gap - S3_ANGLE_GAP);
            }
        }
    }
    Ok(worst)
}

/// Runs the configured instance with the distributed controller and the
/// oracle and checks localizability, nominal equivalence, the locality
/// audit, achievability of every iterate and, where they apply, the
/// terminal and scenario 3 constraints.
pub fn verify(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    let model = build_model::<f64>(cfg)?;
    let h = HorizonSpec::for_partition(cfg.horizon(), model.partition())?;
    let loc = check_localizability(&model, cfg.locality, &h)?;
    report.push(
        "localizability",
        loc.feasible,
        format!("worst relative residual {:.3e} (tolerance {:.1e}) at d = {}", loc.worst_residual, loc.tolerance, cfg.locality),
    );
    if !loc.feasible {
        return Ok(report);
    }
    let mut sim = match simulate(cfg) {
        Ok(s) => s,
        Err(e) => {
            report.push("solve", false, e.to_string());
            return Ok(report);
        }
    };
    let worst = sim.max_deviation();
    report.push("equivalence", worst <= EQUIVALENCE_TOL, format!("max relative deviation {worst:.3e} over {} steps", cfg.steps));
    let (pd, po) = sim.costs();
    report.push("cost", (pd - po).abs() <= EQUIVALENCE_TOL * (1.0 + po.abs()), format!("closed-loop cost {pd:.6} vs oracle {po:.6}"));
    let ach = max_achievability(&sim.dlmpc);
    report.push("achievability", ach <= ACHIEVABILITY_TOL, format!("max residual {ach:.3e}"));
    if cfg.inject_fault {
        let count = sim.controller.model().count();
        sim.controller.inject_message(0, count - 1)?;
    }
    let audit = sim.controller.audit()?;
    let detail = if audit.passed { "no violations".to_string() } else { audit.violations.join("; ") };
    report.push("audit", audit.passed, detail);
    report.audit = Some(audit);
    if cfg.terminal_constraint {
        let norm = max_terminal_norm(&sim.dlmpc, &h);
        report.push("terminal", norm <= TERMINAL_TOL, format!("max predicted ||x_T|| {norm:.3e}"));
    }
    if sim.scenario.kind == ProblemKind::S3 {
        let v = max_gap_violation(&sim.scenario, &sim.dlmpc)?;
        report.push("angle_gap", v <= 1e-4, format!("max gap excess {v:.3e}"));
    }
    Ok(report)
}
