use std::io::Write;
use std::time::Duration;

use nalgebra::{DMatrix, DVector};

use super::{Agent, AdmmParams};
use crate::agents::{audit, build_channels, AccessLog, AuditReport, Harness, Message, Network, Payload, Ownership, PayloadKind, Scheduler, Timing};
use crate::consensus::{consensus_layouts, ConsensusParams, InnerRecord};
use crate::error::{Error, Result};
use crate::kernels::QpSettings;
use crate::model::{build_interconnection_graph, InterconnectionGraph, SystemModel};
use crate::problem::MpcProblem;
use crate::sls::{assemble_achievability, build_locality_mask, build_partitions, AchievabilityOperator, ColumnBlock, HorizonSpec, LocalityMask, PartitionSets, ResponseColumn};
use crate::Scalar;

/// Which distributed algorithm runs the row update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    /// Row updates without coupling.
    Separable,
    /// Row updates through the nested consensus loop.
    Coupled(ConsensusParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub scheduler: Scheduler,
    /// Let the network verify that payloads only carry the sender's own data.
    pub check_ownership: bool,
    /// Assemble `Psi` globally after every iteration and record its
    /// achievability residual (instrumentation only).
    pub assemble_psi: bool,
    /// Restart every solve from zero iterates instead of the previous solution.
    pub cold_start: bool,
    pub qp: QpSettings,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { scheduler: Scheduler::Sequential, check_ownership: true, assemble_psi: false, cold_start: false, qp: QpSettings::default() }
    }
}

/// Residuals of one subsystem at one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub subsystem: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub records: Vec<IterationRecord>,
    /// Largest `(primal, dual)` residual per iteration.
    pub history: Vec<(f64, f64)>,
    /// Achievability residual of `Psi` per iteration, summed from the column owners.
    pub achievability: Vec<f64>,
    /// Same, from a global assembly of `Psi` (only with `assemble_psi`).
    pub assembled_achievability: Vec<f64>,
    pub inner: Vec<InnerRecord>,
    pub inner_iterations: usize,
    pub timing: Timing,
    pub messages: usize,
    pub bytes: usize,
}

impl SolveStats {
    /// Slowest-agent compute time summed over phases.
    pub fn parallel_time(&self) -> Duration {
        self.timing.parallel
    }

    /// Critical path from per-agent median phase times.
    pub fn typical_time(&self) -> Duration {
        self.timing.typical
    }
}

/// Output of one distributed solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput<T: Scalar> {
    pub phi: ResponseColumn<T>,
    pub psi: ResponseColumn<T>,
    /// Predicted trajectory `Phi x0` in `Phi` row order, as computed by the agents.
    pub prediction: DVector<T>,
    /// First inputs applied by the agents, global input order.
    pub input: DVector<T>,
    pub stats: SolveStats,
}

/// Agents and network of one plant, kept alive across MPC steps.
pub struct DistributedController<T: Scalar> {
    model: SystemModel<T>,
    graph: InterconnectionGraph,
    d: usize,
    horizon: HorizonSpec,
    mask: LocalityMask,
    sets: PartitionSets,
    algorithm: Algorithm,
    params: AdmmParams,
    options: SolveOptions,
    harness: Harness<Agent<T>, T>,
    achievability: Option<AchievabilityOperator<T>>,
    step: usize,
}

impl<T: Scalar> DistributedController<T> {
    pub fn new(model: &SystemModel<T>, horizon: usize, d: usize, algorithm: Algorithm, params: AdmmParams, options: SolveOptions) -> Result<Self> {
        params.validate()?;
        if let Algorithm::Coupled(c) = algorithm {
            c.validate()?;
        }
        let h = HorizonSpec::for_partition(horizon, model.partition())?;
        let graph = build_interconnection_graph(model, T::zero());
        let mask = build_locality_mask(&graph, model.partition(), d, h)?;
        let sets = build_partitions(&mask, model.partition())?;
        let agents = (0..model.count())
            .map(|i| Agent::new(i, model, &graph, &mask, &sets, options.qp))
            .collect::<Result<Vec<_>>>()?;
        let ownership = options.check_ownership.then(|| Ownership::new(&sets, &h));
        let network = Network::new(build_channels(&graph, d)?, ownership);
        let achievability = if options.assemble_psi { Some(assemble_achievability(model, &h)?) } else { None };
        Ok(Self {
            model: model.clone(),
            graph,
            d,
            horizon: h,
            mask,
            sets,
            algorithm,
            params,
            options,
            harness: Harness::new(agents, network, options.scheduler),
            achievability,
            step: 0,
        })
    }

    pub fn model(&self) -> &SystemModel<T> {
        &self.model
    }

    pub fn graph(&self) -> &InterconnectionGraph {
        &self.graph
    }

    pub fn radius(&self) -> usize {
        self.d
    }

    pub fn horizon(&self) -> &HorizonSpec {
        &self.horizon
    }

    pub fn mask(&self) -> &LocalityMask {
        &self.mask
    }

    pub fn sets(&self) -> &PartitionSets {
        &self.sets
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn agents(&self) -> &[Agent<T>] {
        self.harness.agents()
    }

    pub fn network(&self) -> &Network {
        self.harness.network()
    }

    pub fn access_logs(&self) -> Vec<AccessLog> {
        self.harness.agents().iter().map(|a| a.log().clone()).collect()
    }

    pub fn audit(&self) -> Result<AuditReport> {
        audit(&self.access_logs(), self.harness.network(), &self.graph, self.d)
    }

    /// Delivers an empty measurement message from `sender` to `receiver`
    /// past the topology check, as a misbehaving agent would.
    pub fn inject_message(&mut self, sender: usize, receiver: usize) -> Result<()> {
        let count = self.model.count();
        if sender >= count || receiver >= count {
            return Err(Error::IndexOutOfRange { index: sender.max(receiver), count });
        }
        let round = self.harness.round(PayloadKind::StateMeasurement, self.step, 0, None);
        let payload = Payload { rows: Vec::new(), cols: Vec::new(), values: DMatrix::<T>::zeros(1, 0) };
        self.harness.network_mut().deliver_unchecked(&Message { round, sender, receiver, payload });
        Ok(())
    }

    /// Runs the distributed algorithm on `problem` and advances the step counter.
    pub fn solve(&mut self, problem: &MpcProblem<T>) -> Result<SolveOutput<T>> {
        if problem.model.partition() != self.model.partition() || problem.horizon != self.horizon {
            return Err(Error::Dimension("problem does not match the controller's plant or horizon".into()));
        }
        problem.check_locality(&self.graph, self.d)?;
        let coupled = matches!(self.algorithm, Algorithm::Coupled(_));
        if !coupled && !problem.is_separable() {
            return Err(Error::InvalidArgument("coupled objectives need the consensus algorithm".into()));
        }
        if self.options.cold_start {
            self.harness.agents_mut().iter_mut().for_each(Agent::reset);
        }
        let step = self.step;
        self.step += 1;
        self.harness.reset_timing();
        let traffic_before = self.harness.network().totals();

        let x0 = &problem.x0;
        let partition = self.model.partition().clone();
        let round = self.harness.round(PayloadKind::StateMeasurement, step, 0, None);
        self.harness.communicate(round, |a, _| {
            let x = x0.rows(partition.state_range(a.id()).start, partition.state_dim(a.id())).into_owned();
            a.measurement_messages(&x, round)
        })?;
        let layouts = if coupled { Some(consensus_layouts(&problem.objectives)) } else { None };
        let mu = match self.algorithm {
            Algorithm::Coupled(c) => c.mu,
            Algorithm::Separable => 0.0,
        };
        let rho = self.params.rho;
        self.harness.run("prepare", |a, inbox| {
            let i = a.id();
            a.receive_state(inbox)?;
            let cl = layouts.as_ref().map(|l| (l[i].clone(), mu));
            a.prepare(problem.objectives[i].clone(), rho, cl).map_err(|e| e.in_subsystem(i, 0))
        })?;

        let mut stats = SolveStats::default();
        let mut converged = false;
        for k in 1..=self.params.max_iter {
            match self.algorithm {
                Algorithm::Separable => {
                    let round = self.harness.round(PayloadKind::PhiRows, step, k, None);
                    self.harness.communicate(round, |a, _| a.row_phase(round).map_err(|e| e.in_subsystem(a.id(), k)))?;
                }
                Algorithm::Coupled(c) => {
                    self.consensus_loop(step, k, &c, &mut stats)?;
                    let round = self.harness.round(PayloadKind::PhiRows, step, k, None);
                    self.harness.communicate(round, |a, _| Ok(a.phi_messages(round)))?;
                }
            }
            let round = self.harness.round(PayloadKind::PsiCols, step, k, None);
            self.harness.communicate(round, |a, inbox| a.column_phase(inbox, round).map_err(|e| e.in_subsystem(a.id(), k)))?;
            let res = self.harness.run("dual", |a, inbox| a.dual_phase(inbox).map_err(|e| e.in_subsystem(a.id(), k)))?;

            let (mut pmax, mut dmax) = (0.0f64, 0.0f64);
            let mut all = true;
            for (i, &(p, d)) in res.iter().enumerate() {
                stats.records.push(IterationRecord { iter: k, subsystem: i, primal_residual: p, dual_residual: d });
                pmax = pmax.max(p);
                dmax = dmax.max(d);
                all &= p <= self.params.eps_p && d <= self.params.eps_d;
            }
            stats.history.push((pmax, dmax));
            stats.achievability.push(self.harness.agents().iter().map(|a| a.column_residual().powi(2)).sum::<f64>().sqrt());
            if let Some(op) = &self.achievability {
                stats.assembled_achievability.push(op.residual(&self.assemble(true)?).as_f64());
            }
            stats.iterations = k;
            if all {
                converged = true;
                break;
            }
        }
        stats.timing = self.harness.timing();
        let after = self.harness.network().totals();
        for (a, b) in after.iter().zip(traffic_before.iter().chain(std::iter::repeat(&(0, 0)))) {
            stats.messages += a.0 - b.0;
            stats.bytes += a.1 - b.1;
        }
        if !converged {
            let (primal, dual) = stats.history.last().copied().unwrap_or((f64::NAN, f64::NAN));
            return Err(Error::NotConverged { iterations: stats.iterations, primal, dual, history: stats.history });
        }

        let mut prediction = DVector::zeros(self.horizon.rows());
        let mut input = DVector::zeros(self.model.p());
        for a in self.harness.agents() {
            let y = a.prediction();
            for (l, &r) in a.row_layout().rows.iter().enumerate() {
                prediction[r] = y[l];
            }
            let u = a.first_input();
            input.rows_mut(partition.input_range(a.id()).start, u.len()).copy_from(&u);
        }
        Ok(SolveOutput { phi: self.assemble(false)?, psi: self.assemble(true)?, prediction, input, stats })
    }

    fn consensus_loop(&mut self, step: usize, outer: usize, c: &ConsensusParams, stats: &mut SolveStats) -> Result<()> {
        let mut last = f64::INFINITY;
        for n in 1..=c.max_inner {
            let round = self.harness.round(PayloadKind::XCopy, step, outer, Some(n));
            self.harness.communicate(round, |a, _| a.consensus_x_phase(round).map_err(|e| e.in_subsystem(a.id(), outer)))?;
            let round = self.harness.round(PayloadKind::ZValue, step, outer, Some(n));
            self.harness.communicate(round, |a, inbox| a.consensus_z_phase(inbox, round))?;
            let res = self.harness.run("consensus_y", |a, inbox| a.consensus_y_phase(inbox))?;
            for (i, &r) in res.iter().enumerate() {
                stats.inner.push(InnerRecord { outer_iter: outer, inner_iter: n, subsystem: i, consensus_residual: r });
            }
            stats.inner_iterations += 1;
            last = res.iter().copied().fold(0.0, f64::max);
            if last < c.eps_x {
                return Ok(());
            }
        }
        Err(Error::ConsensusNotConverged { outer, iterations: c.max_inner, residual: last })
    }

    fn assemble(&self, psi: bool) -> Result<ResponseColumn<T>> {
        let blocks = self
            .harness
            .agents()
            .iter()
            .map(|a| ColumnBlock {
                rows: a.column_layout().rows.clone(),
                values: if psi { a.psi_column().clone() } else { a.phi_column().clone() },
            })
            .collect();
        ResponseColumn::from_blocks(&self.mask, &self.sets, blocks)
    }
}

/// One-shot distributed solve without coupling.
pub fn solve<T: Scalar>(problem: &MpcProblem<T>, d: usize, params: AdmmParams, options: SolveOptions) -> Result<SolveOutput<T>> {
    DistributedController::new(&problem.model, problem.horizon.horizon(), d, Algorithm::Separable, params, options)?.solve(problem)
}

/// Iteration CSV: `iter,subsystem,primal_residual,dual_residual`.
pub fn write_iteration_csv<W: Write>(out: W, records: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "subsystem", "primal_residual", "dual_residual"])?;
    for r in records {
        w.write_record([r.iter.to_string(), r.subsystem.to_string(), format!("{:e}", r.primal_residual), format!("{:e}", r.dual_residual)])?;
    }
    w.flush()?;
    Ok(())
}
