use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use dlmpc::model::{
    build_benchmark_chain, build_interconnection_graph, build_pendulum_chain, read_model, write_model, PendulumParams, SubsystemPartition, SystemModel,
};

#[test]
fn four_pendulum_chain() {
    let m = build_pendulum_chain::<f64>(4, PendulumParams::default()).unwrap();
    assert_eq!((m.n(), m.p(), m.count()), (8, 4, 4));
    let g = build_interconnection_graph(&m, 0.0);
    let mut expected: Vec<(usize, usize)> = (0..4).map(|i| (i, i)).chain((0..3).flat_map(|i| [(i, i + 1), (i + 1, i)])).collect();
    expected.sort_unstable();
    let mut edges = g.edges();
    edges.sort_unstable();
    assert_eq!(edges, expected);
}

#[test]
fn benchmark_chain_sizes() {
    let m = build_benchmark_chain::<f64>(10).unwrap();
    assert_eq!((m.n(), m.p()), (20, 10));
    let single = build_benchmark_chain::<f64>(1).unwrap();
    assert_eq!(single.dense_a(), DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.3, 0.7]));
}

#[test]
fn chain_neighborhoods_match_hop_distance() {
    let g = build_interconnection_graph(&build_benchmark_chain::<f64>(9).unwrap(), 0.0);
    assert_eq!(g.d_outgoing(4, 1).unwrap(), vec![3, 4, 5]);
    assert_eq!(g.d_incoming(4, 2).unwrap(), vec![2, 3, 4, 5, 6]);
    assert_eq!(g.d_outgoing(4, 0).unwrap(), vec![4]);
    assert!(g.d_outgoing(9, 1).is_err());
}

#[test]
fn model_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let m = build_pendulum_chain::<f64>(3, PendulumParams { spring_k: 0.7, ..PendulumParams::default() }).unwrap();
    write_model(&path, &m).unwrap();
    let back: SystemModel<f64> = read_model(&path).unwrap();
    assert_eq!(back, m);
}

#[test]
fn step_applies_dynamics() {
    let part = SubsystemPartition::uniform(2, 1, 1).unwrap();
    let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 2.0]);
    let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let m = SystemModel::from_dense(part, &a, &b, 1.0).unwrap();
    let x = DVector::from_vec(vec![2.0, 1.0]);
    let u = DVector::from_vec(vec![0.5, 0.25]);
    let w = DVector::from_vec(vec![0.0, 1.0]);
    assert_eq!(m.step(&x, &u, Some(&w)), DVector::from_vec(vec![1.6, 2.75]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn equal_angles_exert_no_coupling(count in 2usize..8, theta in -1.0f64..1.0, omega in -1.0f64..1.0, k in 0.0f64..3.0, c in 0.0f64..3.0) {
        // With identical pendulum states the chain behaves like uncoupled pendulums.
        let coupled = build_pendulum_chain::<f64>(count, PendulumParams { spring_k: k, damper_c: c, ..PendulumParams::default() }).unwrap();
        let free = build_pendulum_chain::<f64>(count, PendulumParams { spring_k: 0.0, damper_c: 0.0, ..PendulumParams::default() }).unwrap();
        let x = DVector::from_fn(2 * count, |r, _| if r % 2 == 0 { theta } else { omega });
        let u = DVector::zeros(count);
        prop_assert!((coupled.step(&x, &u, None) - free.step(&x, &u, None)).amax() < 1e-12);
    }

    #[test]
    fn graph_follows_block_support(count in 1usize..6, mask in proptest::collection::vec(any::<bool>(), 36)) {
        let part = SubsystemPartition::uniform(count, 1, 1).unwrap();
        let a = DMatrix::from_fn(count, count, |i, j| if mask[i * 6 + j] { 0.5 } else { 0.0 });
        let m = SystemModel::from_dense(part, &a, &DMatrix::zeros(count, count), 1.0).unwrap();
        let g = build_interconnection_graph(&m, 0.0);
        for i in 0..count {
            for j in 0..count {
                prop_assert_eq!(g.has_edge(i, j) || g.has_edge(j, i), mask[i * 6 + j] || mask[j * 6 + i]);
            }
        }
    }
}
