use nalgebra::DMatrix;
use proptest::prelude::*;

use dlmpc::admm::{row_update, AdmmParams, Algorithm, DistributedController, LocalProblem, RowLayout, RowSolver, SolveOptions};
use dlmpc::consensus::{consensus_layouts, consensus_x_update, consensus_y_update, consensus_z_update, ConsensusParams, ConsensusState};
use dlmpc::experiment::{build_scenario, ExperimentConfig, ProblemKind, SystemKind};
use dlmpc::kernels::QpSettings;
use dlmpc::model::build_interconnection_graph;
use dlmpc::reference::solve_centralized;
use dlmpc::sls::{build_locality_mask, build_partitions};

fn fixture(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(format!("{}/../../fixtures/{name}.cfg", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn z_update_examples() {
    assert!((consensus_z_update(&[0.7, 0.7, 0.7], &[0.0; 3]).unwrap() - 0.7f64).abs() < 1e-15);
    assert_eq!(consensus_z_update(&[1.5, -1.5], &[0.0, 0.0]).unwrap(), 0.0);
    let z: f64 = consensus_z_update(&[1.0, 2.0, 6.0], &[0.5, -1.0, 0.5]).unwrap();
    assert!((z - 3.0).abs() < 1e-15);
    assert!(consensus_z_update::<f64>(&[], &[]).is_err());
    assert!(consensus_z_update(&[1.0], &[0.0, 0.0]).is_err());
}

#[test]
fn y_update_examples() {
    assert_eq!(consensus_y_update(0.4, 0.4, 1.25), 1.25);
    assert_eq!(consensus_y_update(1.0, 0.25, 0.0), 0.75);
    let y = consensus_y_update(0.5, 0.25, 2.0);
    assert_eq!(consensus_y_update(0.25, 0.5, y), 2.0);
}

#[test]
fn decoupled_x_update_equals_row_update() {
    let cfg = ExperimentConfig { system: SystemKind::BenchmarkChain, subsystems: 3, problem: ProblemKind::C1, ..Default::default() };
    let s = build_scenario::<f64>(&cfg).unwrap();
    let p = s.problem().unwrap();
    let model = s.model();
    let graph = build_interconnection_graph(model, 0.0);
    let mask = build_locality_mask(&graph, model.partition(), 1, p.horizon).unwrap();
    let sets = build_partitions(&mask, model.partition()).unwrap();
    let layouts = consensus_layouts(&p.objectives);
    for (i, cl) in layouts.into_iter().enumerate() {
        assert!(cl.is_trivial());
        let layout = RowLayout::new(&mask, &sets, i);
        let x0 = nalgebra::DVector::from_iterator(layout.width(), layout.support.iter().map(|&c| p.x0[c]));
        let lp = LocalProblem { subsystem: i, objective: p.objectives[i].clone(), x0 };
        let psi = DMatrix::from_fn(layout.len(), layout.width(), |r, c| ((r * 7 + c * 3) % 5) as f64 * 0.1 - 0.2);
        let lambda = DMatrix::from_fn(layout.len(), layout.width(), |r, c| ((r + c) % 3) as f64 * 0.05);
        let mut plain = RowSolver::new(&lp, &layout, 1.0, None, QpSettings::default()).unwrap();
        let expected = row_update(&mut plain, &psi, &lambda).unwrap();
        let mut coupled = RowSolver::new(&lp, &layout, 1.0, Some((&cl, 1.0)), QpSettings::default()).unwrap();
        let state = ConsensusState::new(cl);
        let got = consensus_x_update(&mut coupled, &psi, &lambda, &state).unwrap();
        assert!((got.phi - expected).amax() < 1e-10);
        assert!(got.held.is_empty());
    }
}

#[test]
fn zero_initial_state_forces_zero_copies() {
    let cfg = ExperimentConfig { system: SystemKind::BenchmarkChain, subsystems: 4, problem: ProblemKind::C3, ..Default::default() };
    let s = build_scenario::<f64>(&cfg).unwrap();
    let p = s.problem().unwrap().with_x0(nalgebra::DVector::zeros(s.model().n())).unwrap();
    let mut c = s.controller(&cfg).unwrap();
    let out = c.solve(&p).unwrap();
    assert!(out.prediction.amax() < 1e-12);
}

#[test]
fn coupled_algorithm_on_decoupled_instance_matches_separable() {
    let cfg = ExperimentConfig { system: SystemKind::BenchmarkChain, subsystems: 4, problem: ProblemKind::C1, ..Default::default() };
    let s = build_scenario::<f64>(&cfg).unwrap();
    let p = s.problem().unwrap();
    let params = AdmmParams { rho: 1.0, eps_p: 1e-5, eps_d: 1e-5, max_iter: 5000 };
    let run = |alg| DistributedController::new(s.model(), 5, 1, alg, params, SolveOptions::default()).unwrap().solve(&p).unwrap();
    let a = run(Algorithm::Separable);
    let b = run(Algorithm::Coupled(ConsensusParams { mu: 1.0, eps_x: 1e-10, max_inner: 2000 }));
    assert!(a.phi.frobenius_diff(&b.phi) <= 1e-6);
}

#[test]
fn pendulum_s2_matches_oracle_objective() {
    let cfg = fixture("s2");
    let s = build_scenario::<f64>(&cfg).unwrap();
    let p = s.problem().unwrap();
    assert!(matches!(s.algorithm, Algorithm::Coupled(_)));
    let out = s.controller(&cfg).unwrap().solve(&p).unwrap();
    let oracle = solve_centralized(&p).unwrap().objective;
    let gap = (p.objective(&out.prediction) - oracle).abs() / oracle.abs();
    assert!(gap <= 1e-2, "gap {gap:e}");
}

#[test]
fn pendulum_s3_respects_angle_gaps() {
    let cfg = fixture("s3");
    let s = build_scenario::<f64>(&cfg).unwrap();
    let p = s.problem().unwrap();
    let out = s.controller(&cfg).unwrap().solve(&p).unwrap();
    let v = p.max_violation(&out.prediction);
    assert!(v <= 1e-4, "violation {v:e}");
}

proptest! {
    #[test]
    fn z_update_is_shift_equivariant(copies in proptest::collection::vec(-5.0f64..5.0, 1..6), shift in -3.0f64..3.0) {
        let duals = vec![0.0; copies.len()];
        let z = consensus_z_update(&copies, &duals).unwrap();
        let shifted: Vec<f64> = copies.iter().map(|c| c + shift).collect();
        let zs = consensus_z_update(&shifted, &duals).unwrap();
        prop_assert!((zs - z - shift).abs() < 1e-12);
        let lo = copies.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = copies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(z >= lo - 1e-12 && z <= hi + 1e-12);
    }

    #[test]
    fn y_update_telescopes(deltas in proptest::collection::vec(-2.0f64..2.0, 1..8), y0 in -1.0f64..1.0) {
        let mut y = y0;
        for d in &deltas {
            y = consensus_y_update(*d, 0.0, y);
        }
        let sum: f64 = deltas.iter().sum();
        prop_assert!((y - y0 - sum).abs() < 1e-12);
    }
}
