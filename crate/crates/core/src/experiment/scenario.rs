use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ExperimentConfig, ProblemKind, SystemKind};
use crate::admm::{Algorithm, DistributedController, SolveOptions};
use crate::error::{Error, Result};
use crate::kernels::QpSettings;
use crate::model::{build_benchmark_chain, build_interconnection_graph, build_pendulum_chain, read_model, PendulumParams, SystemModel};
use crate::problem::{objective_from_stages, MpcProblem, ProblemTemplate, StageConstraint, StageCost};
use crate::reference::CondensedOracle;
use crate::sls::HorizonSpec;
use crate::Scalar;

/// Largest angle gap between coupled pendulums in scenario 3.
pub const S3_ANGLE_GAP: f64 = 0.05;
/// Real time after which the scenario 3 gap applies, in seconds.
pub const S3_START_TIME: f64 = 2.0;
/// State box of case 2.
pub const C2_STATE_BOUND: f64 = 2.0;
/// Input box of case 2.
pub const C2_INPUT_BOUND: f64 = 0.1;
/// Input box of case 4.
pub const C4_INPUT_BOUND: f64 = 0.2;
/// Largest gap between the first states of coupled subsystems in case 4.
pub const C4_POSITION_GAP: f64 = 2.5;

/// Prediction steps at which a stage constraint applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    /// `t = 1, ..., T`.
    States,
    /// `t = 0, ..., T - 1`.
    Inputs,
    /// Steps `t >= 1` whose real time `(step + t) dt` exceeds the given seconds.
    AfterTime(f64),
}

impl Schedule {
    pub fn steps(self, step: usize, horizon: usize, dt: f64) -> Vec<usize> {
        match self {
            Schedule::States => (1..=horizon).collect(),
            Schedule::Inputs => (0..horizon).collect(),
            Schedule::AfterTime(s) => (1..=horizon).filter(|&t| is_after(step + t, dt, s)).collect(),
        }
    }
}

/// `t dt > seconds`, robust to the rounding of `t dt`.
pub fn is_after(t: usize, dt: f64, seconds: f64) -> bool {
    t as f64 * dt > seconds * (1.0 + 1e-9)
}

/// MPC instance family of a scenario: fixed stage costs, time-dependent
/// constraint windows.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTemplate<T: Scalar> {
    pub model: SystemModel<T>,
    pub horizon: usize,
    pub stages: Vec<StageCost<T>>,
    pub constraints: Vec<Vec<(StageConstraint<T>, Schedule)>>,
    pub terminal_constraint: bool,
}

impl<T: Scalar> ProblemTemplate<T> for ScenarioTemplate<T> {
    fn model(&self) -> &SystemModel<T> {
        &self.model
    }

    fn problem_at(&self, step: usize, x0: DVector<T>) -> Result<MpcProblem<T>> {
        let partition = self.model.partition();
        let h = HorizonSpec::for_partition(self.horizon, partition)?;
        let objectives = self
            .stages
            .iter()
            .zip(&self.constraints)
            .map(|(stage, cons)| {
                let active: Vec<(StageConstraint<T>, Vec<usize>)> =
                    cons.iter().map(|(c, s)| (c.clone(), s.steps(step, self.horizon, self.model.dt()))).collect();
                objective_from_stages(&h, partition, stage, &active)
            })
            .collect::<Result<Vec<_>>>()?;
        MpcProblem::new(self.model.clone(), self.horizon, objectives, self.terminal_constraint, x0)
    }
}

/// A built experiment: plant, problem family, algorithm and initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T: Scalar> {
    pub kind: ProblemKind,
    pub template: ScenarioTemplate<T>,
    pub algorithm: Algorithm,
    pub locality: usize,
    pub x0: DVector<T>,
}

impl<T: Scalar> Scenario<T> {
    pub fn model(&self) -> &SystemModel<T> {
        &self.template.model
    }

    pub fn controller(&self, cfg: &ExperimentConfig) -> Result<DistributedController<T>> {
        let options = SolveOptions {
            scheduler: cfg.scheduler,
            cold_start: cfg.cold_start,
            assemble_psi: cfg.assemble_psi,
            ..SolveOptions::default()
        };
        DistributedController::new(self.model(), self.template.horizon, self.locality, self.algorithm, cfg.admm_params(), options)
    }

    pub fn oracle(&self) -> Result<CondensedOracle<T>> {
        CondensedOracle::new(self.model(), self.template.horizon, QpSettings::default())
    }

    pub fn problem(&self) -> Result<MpcProblem<T>> {
        self.template.problem_at(0, self.x0.clone())
    }
}

/// Plant selected by the configuration.
pub fn build_model<T: Scalar>(cfg: &ExperimentConfig) -> Result<SystemModel<T>> {
    match &cfg.system {
        SystemKind::PendulumChain => build_pendulum_chain(cfg.subsystems, PendulumParams { dt: cfg.dt, ..PendulumParams::default() }),
        SystemKind::BenchmarkChain => build_benchmark_chain(cfg.subsystems),
        SystemKind::Import(path) => read_model(path),
    }
}

/// Initial state with entries uniform in `[-1, 1]` drawn from ChaCha8 seeded with `seed`.
pub fn initial_state<T: Scalar>(n: usize, seed: u64) -> DVector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-1.0, 1.0);
    DVector::from_fn(n, |_, _| T::lit(dist.sample(&mut rng)))
}

fn selector<T: Scalar>(rows: usize, cols: usize, at: usize) -> DMatrix<T> {
    DMatrix::from_fn(rows, cols, |r, c| if c == at + r { T::one() } else { T::zero() })
}

/// `[x]_i - mean_j [x]_j` on the components `comps` of each subsystem, as
/// rows over the footprint states.
fn deviation<T: Scalar>(model: &SystemModel<T>, footprint: &[usize], i: usize, neighbors: &[usize], comps: &[usize]) -> DMatrix<T> {
    let part = model.partition();
    let cols: usize = footprint.iter().map(|&j| part.state_dim(j)).sum();
    let offset = |j: usize| footprint.iter().take_while(|&&k| k != j).map(|&k| part.state_dim(k)).sum::<usize>();
    let mut d = DMatrix::zeros(comps.len(), cols);
    let share = T::one() / T::from_usize_lossy(neighbors.len().max(1));
    for (r, &a) in comps.iter().enumerate() {
        d[(r, offset(i) + a)] = T::one();
        for &j in neighbors {
            d[(r, offset(j) + a)] -= share;
        }
    }
    d
}

/// Builds the plant, the scenario or case and its initial state.
///
/// s1: `||x_i||^2 + ||u_i||^2`. s2: `(theta_i - mean_j theta_j)^2 +
/// omega_i^2 + u_i^2` over the chain neighbours. s3: s2 with
/// `|theta_i - theta_j| <= 0.05` once `t dt > 2`. c1: `||x_i||^2 +
/// ||u_i||^2`. c2: c1 with state and input boxes. c3: c1 plus
/// `||x_i - mean_j x_j||^2`. c4: c3 with input boxes and gaps between the
/// first states of neighbours.
pub fn build_scenario<T: Scalar>(cfg: &ExperimentConfig) -> Result<Scenario<T>> {
    cfg.validate()?;
    let model: SystemModel<T> = build_model(cfg)?;
    let kind = cfg.problem;
    let part = model.partition().clone();
    let graph = build_interconnection_graph(&model, T::zero());
    let horizon = cfg.horizon();
    let count = model.count();
    if matches!(kind, ProblemKind::S2 | ProblemKind::S3) && (0..count).any(|i| part.state_dim(i) != 2 || part.input_dim(i) != 1) {
        return Err(Error::Config(format!("scenario {kind} needs pendulum subsystems")));
    }
    if matches!(kind, ProblemKind::C3 | ProblemKind::C4) && (1..count).any(|i| part.state_dim(i) != part.state_dim(0)) {
        return Err(Error::Config(format!("case {kind} needs subsystems of equal state dimension")));
    }
    let mut stages = Vec::with_capacity(count);
    let mut constraints = Vec::with_capacity(count);
    for i in 0..count {
        let neighbors: Vec<usize> = graph.d_incoming(i, 1)?.into_iter().filter(|&j| j != i).collect();
        let coupled = kind.is_coupled() && !neighbors.is_empty();
        let mut footprint = vec![i];
        if coupled {
            footprint.extend(&neighbors);
            footprint.sort_unstable();
        }
        let ns: usize = footprint.iter().map(|&j| part.state_dim(j)).sum();
        let ps: usize = footprint.iter().map(|&j| part.input_dim(j)).sum();
        let at_x = footprint.iter().take_while(|&&k| k != i).map(|&k| part.state_dim(k)).sum::<usize>();
        let at_u = footprint.iter().take_while(|&&k| k != i).map(|&k| part.input_dim(k)).sum::<usize>();
        let own_x: DMatrix<T> = selector(part.state_dim(i), ns, at_x);
        let own_u: DMatrix<T> = selector(part.input_dim(i), ps, at_u);
        let input_weight = own_u.transpose() * &own_u;
        let state_weight = match kind {
            ProblemKind::S1 | ProblemKind::C1 | ProblemKind::C2 => own_x.transpose() * &own_x,
            ProblemKind::S2 | ProblemKind::S3 => {
                let omega = selector::<T>(1, ns, at_x + 1);
                let mut q = omega.transpose() * omega;
                if coupled {
                    let dev = deviation(&model, &footprint, i, &neighbors, &[0]);
                    q += dev.transpose() * dev;
                } else {
                    let theta = selector::<T>(1, ns, at_x);
                    q += theta.transpose() * theta;
                }
                q
            }
            ProblemKind::C3 | ProblemKind::C4 => {
                let mut q = own_x.transpose() * &own_x;
                if coupled {
                    let comps: Vec<usize> = (0..part.state_dim(i)).collect();
                    let dev = deviation(&model, &footprint, i, &neighbors, &comps);
                    q += dev.transpose() * dev;
                }
                q
            }
        };
        stages.push(StageCost { subsystem: i, footprint: footprint.clone(), state_weight, input_weight });

        let mut cons = Vec::new();
        let own_box = |bound: f64, states: bool| -> StageConstraint<T> {
            let (dim, other) = if states { (part.state_dim(i), part.input_dim(i)) } else { (part.input_dim(i), part.state_dim(i)) };
            let coeffs = DMatrix::from_fn(2 * dim, dim, |r, c| if r / 2 == c { T::lit(if r % 2 == 0 { 1.0 } else { -1.0 }) } else { T::zero() });
            let zeros = DMatrix::zeros(2 * dim, other);
            let (state_coeffs, input_coeffs) = if states { (coeffs, zeros) } else { (zeros, coeffs) };
            StageConstraint { footprint: vec![i], state_coeffs, input_coeffs, bound: DVector::from_element(2 * dim, T::lit(bound)) }
        };
        let gaps = |comp: usize, gap: f64| -> Vec<StageConstraint<T>> {
            neighbors
                .iter()
                .map(|&j| {
                    let pair = if i < j { vec![i, j] } else { vec![j, i] };
                    let (ni, nj) = (part.state_dim(i), part.state_dim(j));
                    let (oi, oj) = if i < j { (0, ni) } else { (nj, 0) };
                    let mut sc = DMatrix::zeros(2, ni + nj);
                    sc[(0, oi + comp)] = T::one();
                    sc[(0, oj + comp)] = -T::one();
                    sc[(1, oi + comp)] = -T::one();
                    sc[(1, oj + comp)] = T::one();
                    let inputs = part.input_dim(i) + part.input_dim(j);
                    StageConstraint { footprint: pair, state_coeffs: sc, input_coeffs: DMatrix::zeros(2, inputs), bound: DVector::from_element(2, T::lit(gap)) }
                })
                .collect()
        };
        match kind {
            ProblemKind::S3 => cons.extend(gaps(0, S3_ANGLE_GAP).into_iter().map(|c| (c, Schedule::AfterTime(S3_START_TIME)))),
            ProblemKind::C2 => {
                cons.push((own_box(C2_STATE_BOUND, true), Schedule::States));
                cons.push((own_box(C2_INPUT_BOUND, false), Schedule::Inputs));
            }
            ProblemKind::C4 => {
                cons.push((own_box(C4_INPUT_BOUND, false), Schedule::Inputs));
                cons.extend(gaps(0, C4_POSITION_GAP).into_iter().map(|c| (c, Schedule::States)));
            }
            _ => {}
        }
        constraints.push(cons);
    }
    let algorithm = if kind.is_coupled() { Algorithm::Coupled(cfg.consensus_params()) } else { Algorithm::Separable };
    let x0 = initial_state(model.n(), cfg.seed);
    let template = ScenarioTemplate { model, horizon, stages, constraints, terminal_constraint: cfg.terminal_constraint };
    Ok(Scenario { kind, template, algorithm, locality: cfg.locality, x0 })
}
