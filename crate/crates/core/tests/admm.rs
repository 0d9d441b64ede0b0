use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dlmpc::admm::{column_update, dual_update, residuals, row_update, solve, AdmmParams, Algorithm, DistributedController, LocalProblem, RowLayout, RowSolver, SolveOptions};
use dlmpc::agents::Scheduler;
use dlmpc::experiment::{build_scenario, ExperimentConfig, ProblemKind, SystemKind};
use dlmpc::kernels::{Polytope, QpSettings, QuadraticCost};
use dlmpc::model::{build_benchmark_chain, build_interconnection_graph, SubsystemPartition, SystemModel};
use dlmpc::problem::{FootprintLayout, MpcProblem, SubsystemObjective};
use dlmpc::reference::solve_centralized;
use dlmpc::sls::{build_locality_mask, build_partitions, HorizonSpec};

fn scalar_model() -> SystemModel<f64> {
    let part = SubsystemPartition::uniform(1, 1, 1).unwrap();
    SystemModel::from_dense(part, &DMatrix::from_element(1, 1, 1.0), &DMatrix::from_element(1, 1, 1.0), 1.0).unwrap()
}

/// `x_1^2 + u_0^2` for the scalar model with horizon 1, optionally with `u_0 >= 0`.
fn scalar_objective(h: &HorizonSpec, model: &SystemModel<f64>, weight: f64) -> SubsystemObjective<f64> {
    let fp = FootprintLayout::single(h, model.partition(), 0).unwrap();
    let mut cost = QuadraticCost::zeros(fp.len());
    cost.add_squared_residual(&[(fp.x(0, 1, 0), 1.0)], 0.0, weight);
    cost.add_squared_residual(&[(fp.u(0, 0, 0), 1.0)], 0.0, weight);
    let n = fp.len();
    SubsystemObjective::new(0, fp, cost, Polytope::unconstrained(n)).unwrap()
}

fn scalar_row_solver(weight: f64, x0: f64) -> (RowSolver<f64>, RowLayout) {
    let model = scalar_model();
    let h = HorizonSpec::for_partition(1, model.partition()).unwrap();
    let graph = build_interconnection_graph(&model, 0.0);
    let mask = build_locality_mask(&graph, model.partition(), 1, h).unwrap();
    let sets = build_partitions(&mask, model.partition()).unwrap();
    let layout = RowLayout::new(&mask, &sets, 0);
    let lp = LocalProblem { subsystem: 0, objective: scalar_objective(&h, &model, weight), x0: DVector::from_element(1, x0) };
    (RowSolver::new(&lp, &layout, 1.0, None, QpSettings::default()).unwrap(), layout)
}

#[test]
fn zero_objective_row_update_is_psi_minus_lambda() {
    let (mut solver, layout) = scalar_row_solver(0.0, 1.0);
    let psi = DMatrix::from_column_slice(layout.len(), 1, &[0.3, -1.2, 0.7]);
    let lambda = DMatrix::from_column_slice(layout.len(), 1, &[0.1, 0.4, -0.2]);
    let phi = row_update(&mut solver, &psi, &lambda).unwrap();
    assert!((phi - (&psi - &lambda)).amax() < 1e-12);
}

#[test]
fn zero_initial_state_row_update_ignores_cost() {
    let (mut solver, layout) = scalar_row_solver(1.0, 0.0);
    let psi = DMatrix::from_column_slice(layout.len(), 1, &[1.0, 2.0, 3.0]);
    let lambda = DMatrix::zeros(layout.len(), 1);
    let phi = row_update(&mut solver, &psi, &lambda).unwrap();
    assert!((phi - psi).amax() < 1e-12);
}

#[test]
fn scalar_row_update_matches_closed_form() {
    // Row order is x_0, x_1, u_0. With x_0 = 1 and rho = 1 the cost rows
    // minimize phi^2 + (phi - v)^2 / 2, so phi = v / 3; the x_0 row keeps v.
    let (mut solver, layout) = scalar_row_solver(1.0, 1.0);
    let v = [0.9, -0.6, 1.5];
    let psi = DMatrix::from_column_slice(layout.len(), 1, &v);
    let phi = row_update(&mut solver, &psi, &DMatrix::zeros(3, 1)).unwrap();
    let expected = [v[0], v[1] / 3.0, v[2] / 3.0];
    for (k, e) in expected.iter().enumerate() {
        assert!((phi[(k, 0)] - e).abs() < 1e-10, "row {k}: {} vs {e}", phi[(k, 0)]);
    }
    let zero = row_update(&mut solver, &DMatrix::zeros(3, 1), &DMatrix::zeros(3, 1)).unwrap();
    assert!(zero.amax() < 1e-12);
}

fn scalar_problem(x0: f64) -> MpcProblem<f64> {
    let model = scalar_model();
    let h = HorizonSpec::for_partition(1, model.partition()).unwrap();
    let obj = scalar_objective(&h, &model, 1.0);
    MpcProblem::new(model, 1, vec![obj], false, DVector::from_element(1, x0)).unwrap()
}

fn tight() -> AdmmParams {
    AdmmParams { rho: 1.0, eps_p: 1e-8, eps_d: 1e-8, max_iter: 5000 }
}

#[test]
fn scalar_solve_matches_analytic_minimizer() {
    // min (1 + u)^2 + u^2 gives u = -1/2 and x_1 = 1/2.
    let out = solve(&scalar_problem(1.0), 0, tight(), SolveOptions::default()).unwrap();
    let h = out.psi.horizon();
    assert!((out.prediction[h.u_row(0, 0)] + 0.5).abs() < 1e-6);
    assert!((out.prediction[h.x_row(1, 0)] - 0.5).abs() < 1e-6);
    assert!((out.input[0] + 0.5).abs() < 1e-6);
}

#[test]
fn zero_initial_state_gives_zero_trajectory() {
    let out = solve(&scalar_problem(0.0), 0, tight(), SolveOptions::default()).unwrap();
    assert!(out.prediction.amax() < 1e-12);
}

fn bench(case: ProblemKind, n: usize) -> ExperimentConfig {
    ExperimentConfig { system: SystemKind::BenchmarkChain, subsystems: n, problem: case, ..Default::default() }
}

fn objective_gap(cfg: &ExperimentConfig) -> f64 {
    let s = build_scenario::<f64>(cfg).unwrap();
    let p = s.problem().unwrap();
    let oracle = solve_centralized(&p).unwrap();
    let mut c = s.controller(cfg).unwrap();
    let out = c.solve(&p).unwrap();
    (p.objective(&out.prediction) - oracle.objective).abs() / oracle.objective.abs()
}

#[test]
fn benchmark_case1_matches_oracle() {
    assert!(objective_gap(&bench(ProblemKind::C1, 5)) <= 1e-3);
}

#[test]
fn solution_is_robust_to_rho() {
    for rho in [0.5, 1.0, 5.0] {
        for case in [ProblemKind::C1, ProblemKind::C2] {
            let gap = objective_gap(&ExperimentConfig { rho, ..bench(case, 4) });
            assert!(gap <= 1e-3, "{case} rho {rho}: gap {gap:e}");
        }
    }
}

#[test]
fn random_column_updates_are_feasible() {
    let model = build_benchmark_chain::<f64>(3).unwrap();
    let ctrl = DistributedController::new(&model, 3, 1, Algorithm::Separable, AdmmParams::default(), SolveOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for agent in ctrl.agents() {
        let proj = agent.projector();
        let shape = (proj.unknowns(), proj.rhs.ncols());
        let phi = DMatrix::from_fn(shape.0, shape.1, |_, _| rng.gen_range(-5.0..5.0));
        let lambda = DMatrix::from_fn(shape.0, shape.1, |_, _| rng.gen_range(-5.0..5.0));
        let psi = column_update(proj, &phi, &lambda).unwrap();
        assert!(proj.residual(&psi) <= 1e-10, "agent {}: {:e}", agent.id(), proj.residual(&psi));
        let again = column_update(proj, &psi, &DMatrix::zeros(shape.0, shape.1)).unwrap();
        assert!((again - &psi).amax() < 1e-10);
    }
}

#[test]
fn schedulers_give_bitwise_identical_results() {
    for case in [ProblemKind::C2, ProblemKind::C3] {
        let cfg = bench(case, 6);
        let s = build_scenario::<f64>(&cfg).unwrap();
        let p = s.problem().unwrap();
        let run = |scheduler| {
            let options = SolveOptions { scheduler, ..SolveOptions::default() };
            let mut c = DistributedController::new(s.model(), cfg.horizon(), 1, s.algorithm, cfg.admm_params(), options).unwrap();
            c.solve(&p).unwrap()
        };
        let a = run(Scheduler::Sequential);
        let b = run(Scheduler::Parallel);
        assert_eq!(a.phi, b.phi);
        assert_eq!(a.psi, b.psi);
        assert_eq!(a.stats.iterations, b.stats.iterations);
        assert_eq!(a.stats.history, b.stats.history);
    }
}

#[test]
fn warm_start_needs_fewer_iterations() {
    let cfg = bench(ProblemKind::C1, 5);
    let s = build_scenario::<f64>(&cfg).unwrap();
    let p = s.problem().unwrap();
    let mut c = s.controller(&cfg).unwrap();
    let cold = c.solve(&p).unwrap().stats.iterations;
    let warm = c.solve(&p).unwrap().stats.iterations;
    assert!(warm < cold, "warm {warm} vs cold {cold}");
}

#[test]
fn iteration_limit_is_reported() {
    let cfg = ExperimentConfig { max_iter: 2, ..bench(ProblemKind::C1, 4) };
    let s = build_scenario::<f64>(&cfg).unwrap();
    let err = s.controller(&cfg).unwrap().solve(&s.problem().unwrap()).unwrap_err();
    assert!(matches!(err, dlmpc::Error::NotConverged { iterations: 2, .. }), "{err}");
}

proptest! {
    #[test]
    fn dual_update_adds_the_primal_gap(vals in proptest::collection::vec(-10.0f64..10.0, 18)) {
        let phi = DMatrix::from_column_slice(3, 2, &vals[0..6]);
        let psi = DMatrix::from_column_slice(3, 2, &vals[6..12]);
        let lambda = DMatrix::from_column_slice(3, 2, &vals[12..18]);
        let next = dual_update(&phi, &psi, &lambda).unwrap();
        prop_assert!((next - &lambda - (&phi - &psi)).amax() < 1e-12);
        let (p, d) = residuals(&phi, &psi, &lambda);
        prop_assert!(p >= 0.0 && d >= 0.0);
        prop_assert!((p - (&phi - &psi).norm()).abs() < 1e-12);
    }
}
