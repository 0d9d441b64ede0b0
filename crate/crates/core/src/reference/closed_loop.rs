use std::fmt;
use std::io::Write;

use nalgebra::DVector;

use super::CondensedOracle;
use crate::admm::{Algorithm, DistributedController, SolveStats};
use crate::agents::AuditReport;
use crate::error::{Error, Result};
use crate::model::{SubsystemPartition, SystemModel};
use crate::problem::{ProblemTemplate, StageCost};
use crate::Scalar;

/// Controller driving a receding-horizon run.
pub enum Controller<T: Scalar> {
    Distributed(Box<DistributedController<T>>),
    Centralized(CondensedOracle<T>),
}

impl<T: Scalar> Controller<T> {
    /// `algorithm1`, `algorithm2` or `centralized`.
    pub fn name(&self) -> &'static str {
        match self {
            Controller::Distributed(c) => match c.algorithm() {
                Algorithm::Separable => "algorithm1",
                Algorithm::Coupled(_) => "algorithm2",
            },
            Controller::Centralized(_) => "centralized",
        }
    }
}

/// Solver statistics of one real time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub t: usize,
    pub solver: &'static str,
    /// Outer iterations (one for the oracle).
    pub iters: usize,
    /// Simulated-parallel compute time of the step in milliseconds.
    pub max_agent_ms: f64,
    pub total_msgs: usize,
    pub total_bytes: usize,
    pub objective: f64,
}

/// Closed-loop record of a receding-horizon run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord<T: Scalar> {
    /// `x(0), ..., x(steps)`.
    pub states: Vec<DVector<T>>,
    /// `u(0), ..., u(steps - 1)`.
    pub inputs: Vec<DVector<T>>,
    /// Predicted trajectory of every step, stacked in `Phi` row order.
    pub predictions: Vec<DVector<T>>,
    pub stats: Vec<StepStats>,
    /// Full distributed solver statistics per step (empty for the oracle).
    pub solves: Vec<SolveStats>,
    pub audit: Option<AuditReport>,
}

impl<T: Scalar> RunRecord<T> {
    fn new(x0: DVector<T>) -> Self {
        Self { states: vec![x0], inputs: Vec::new(), predictions: Vec::new(), stats: Vec::new(), solves: Vec::new(), audit: None }
    }

    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    /// Largest `||x(t+1) - A x(t) - B u(t) - w(t)||_inf`.
    pub fn recursion_residual(&self, plant: &SystemModel<T>, w: &[DVector<T>]) -> T {
        let mut worst = T::zero();
        for t in 0..self.steps() {
            let next = plant.step(&self.states[t], &self.inputs[t], w.get(t));
            worst = worst.max((&self.states[t + 1] - next).amax());
        }
        worst
    }
}

/// A run stopped by a solver failure, with everything recorded before it.
#[derive(Debug)]
pub struct HaltedRun<T: Scalar> {
    pub record: RunRecord<T>,
    pub step: usize,
    pub error: Error,
}

impl<T: Scalar> fmt::Display for HaltedRun<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run halted at step {}: {}", self.step, self.error)
    }
}

impl<T: Scalar> std::error::Error for HaltedRun<T> {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl<T: Scalar> From<HaltedRun<T>> for Error {
    fn from(h: HaltedRun<T>) -> Self {
        Error::Halted { step: h.step, source: Box::new(h.error) }
    }
}

fn millis(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Measures, solves, applies the first input and advances `plant` with
/// `w(t)` (zero where `w` is shorter than `steps`).
pub fn receding_horizon<T: Scalar>(
    controller: &mut Controller<T>,
    template: &dyn ProblemTemplate<T>,
    plant: &SystemModel<T>,
    x0: DVector<T>,
    steps: usize,
    w: &[DVector<T>],
) -> std::result::Result<RunRecord<T>, HaltedRun<T>> {
    let mut record = RunRecord::new(x0);
    let solver = controller.name();
    for t in 0..steps {
        let x = record.states[t].clone();
        let outcome = template.problem_at(t, x.clone()).and_then(|problem| match controller {
            Controller::Distributed(c) => {
                let out = c.solve(&problem)?;
                let objective = problem.objective(&out.prediction).as_f64();
                let stats = StepStats {
                    t,
                    solver,
                    iters: out.stats.iterations,
                    max_agent_ms: millis(out.stats.parallel_time()),
                    total_msgs: out.stats.messages,
                    total_bytes: out.stats.bytes,
                    objective,
                };
                Ok((out.input, out.prediction, stats, Some(out.stats)))
            }
            Controller::Centralized(o) => {
                let start = std::time::Instant::now();
                let sol = o.solve(&problem)?;
                let stats = StepStats {
                    t,
                    solver,
                    iters: 1,
                    max_agent_ms: millis(start.elapsed()),
                    total_msgs: 0,
                    total_bytes: 0,
                    objective: sol.objective.as_f64(),
                };
                Ok((sol.first_input().clone(), sol.stacked, stats, None))
            }
        });
        let (u, prediction, stats, solve) = match outcome {
            Ok(v) => v,
            Err(error) => {
                if let Controller::Distributed(c) = controller {
                    record.audit = c.audit().ok();
                }
                return Err(HaltedRun { record, step: t, error });
            }
        };
        let next = plant.step(&x, &u, w.get(t));
        record.states.push(next);
        record.inputs.push(u);
        record.predictions.push(prediction);
        record.stats.push(stats);
        record.solves.extend(solve);
    }
    if let Controller::Distributed(c) = controller {
        record.audit = match c.audit() {
            Ok(a) => Some(a),
            Err(error) => return Err(HaltedRun { record, step: steps, error }),
        };
    }
    Ok(record)
}

/// `sum_t sum_i l_i(x(t), u(t))` over the applied steps.
pub fn closed_loop_cost<T: Scalar>(record: &RunRecord<T>, stages: &[StageCost<T>], partition: &SubsystemPartition) -> T {
    let mut total = T::zero();
    for (x, u) in record.states.iter().zip(&record.inputs) {
        for s in stages {
            total += s.eval(partition, x, Some(u));
        }
    }
    total
}

/// Trajectory CSV: `t,subsystem,signal,index,value`.
pub fn write_trajectory_csv<T: Scalar, W: Write>(out: W, record: &RunRecord<T>, partition: &SubsystemPartition) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "subsystem", "signal", "index", "value"])?;
    for (t, x) in record.states.iter().enumerate() {
        for i in 0..partition.count() {
            for (a, k) in partition.state_range(i).enumerate() {
                w.write_record([t.to_string(), i.to_string(), "x".into(), a.to_string(), format!("{:e}", x[k].as_f64())])?;
            }
            if let Some(u) = record.inputs.get(t) {
                for (b, k) in partition.input_range(i).enumerate() {
                    w.write_record([t.to_string(), i.to_string(), "u".into(), b.to_string(), format!("{:e}", u[k].as_f64())])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Stats CSV: `t,solver,iters,max_agent_ms,total_msgs`.
pub fn write_stats_csv<W: Write>(out: W, stats: &[StepStats]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "solver", "iters", "max_agent_ms", "total_msgs"])?;
    for s in stats {
        w.write_record([s.t.to_string(), s.solver.to_string(), s.iters.to_string(), format!("{:.6}", s.max_agent_ms), s.total_msgs.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
