use nalgebra::DMatrix;

use super::{SubsystemPartition, SystemModel};
use crate::error::{Error, Result};
use crate::Scalar;

/// Physical constants of the coupled pendulum chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    /// Spring constant between neighbouring pendulums (N/m).
    pub spring_k: f64,
    /// Damper constant between neighbouring pendulums (Ns/m).
    pub damper_c: f64,
    /// Forward-Euler step (s).
    pub dt: f64,
    pub gravity: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self { spring_k: 1.0, damper_c: 3.0, dt: 0.2, gravity: 10.0 }
    }
}

/// Chain of `count` unit pendulums coupled to their neighbours by a spring and a damper.
///
/// Subsystem `i` has states `[theta_i, omega_i]` and one input acting on
/// `omega_i`. Continuous dynamics
/// `theta_i'' = -g theta_i - k sum_j (theta_i - theta_j) - c sum_j (omega_i - omega_j) + u_i`
/// over the chain neighbours `j`, discretized with forward Euler.
pub fn build_pendulum_chain<T: Scalar>(count: usize, params: PendulumParams) -> Result<SystemModel<T>> {
    if count < 2 {
        return Err(Error::InvalidArgument(format!("pendulum chain needs at least 2 pendulums, got {count}")));
    }
    if !(params.dt.is_finite() && params.dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {}", params.dt)));
    }
    let PendulumParams { spring_k: k, damper_c: c, dt, gravity: g } = params;
    let partition = SubsystemPartition::uniform(count, 2, 1)?;
    let mut a_blocks = Vec::with_capacity(count * count);
    let mut b_blocks = Vec::with_capacity(count * count);
    for i in 0..count {
        let degree = usize::from(i > 0) + usize::from(i + 1 < count);
        let deg = degree as f64;
        for j in 0..count {
            let a = if i == j {
                [1.0, dt, -dt * (g + k * deg), 1.0 - dt * c * deg]
            } else if i.abs_diff(j) == 1 {
                [0.0, 0.0, dt * k, dt * c]
            } else {
                [0.0; 4]
            };
            a_blocks.push(DMatrix::from_row_slice(2, 2, &a.map(T::lit)));
            let b = if i == j { [0.0, dt] } else { [0.0; 2] };
            b_blocks.push(DMatrix::from_row_slice(2, 1, &b.map(T::lit)));
        }
    }
    SystemModel::from_blocks(partition, a_blocks, b_blocks, dt)
}

/// Chain of two-state subsystems with the fixed scalability-study blocks
/// `A_ii = [[1, 0.1], [-0.3, 0.7]]`, `A_ij = [[0, 0], [0.1, 0.1]]` for chain
/// neighbours and `B_ii = [0; 0.1]`.
pub fn build_benchmark_chain<T: Scalar>(count: usize) -> Result<SystemModel<T>> {
    if count == 0 {
        return Err(Error::InvalidArgument("benchmark chain needs at least one subsystem".into()));
    }
    let partition = SubsystemPartition::uniform(count, 2, 1)?;
    let diag = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.3, 0.7].map(T::lit));
    let off = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.1, 0.1].map(T::lit));
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.1].map(T::lit));
    let mut a_blocks = Vec::with_capacity(count * count);
    let mut b_blocks = Vec::with_capacity(count * count);
    for i in 0..count {
        for j in 0..count {
            a_blocks.push(match i.abs_diff(j) {
                0 => diag.clone(),
                1 => off.clone(),
                _ => DMatrix::zeros(2, 2),
            });
            b_blocks.push(if i == j { b.clone() } else { DMatrix::zeros(2, 1) });
        }
    }
    SystemModel::from_blocks(partition, a_blocks, b_blocks, 0.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_interconnection_graph;

    fn chain_edges(count: usize) -> Vec<(usize, usize)> {
        (0..count)
            .flat_map(|i| (0..count).filter(move |j| i.abs_diff(*j) <= 1).map(move |j| (i, j)))
            .collect()
    }

    #[test]
    fn four_pendulums_have_paper_dimensions() {
        let m = build_pendulum_chain::<f64>(4, PendulumParams::default()).unwrap();
        assert_eq!((m.n(), m.p(), m.count()), (8, 4, 4));
        assert_eq!(build_interconnection_graph(&m, 0.0).edges(), chain_edges(4));
    }

    #[test]
    fn uncoupled_pendulums_are_block_diagonal() {
        let params = PendulumParams { spring_k: 0.0, damper_c: 0.0, ..Default::default() };
        let m = build_pendulum_chain::<f64>(2, params).unwrap();
        assert!(m.a_block(0, 1).iter().all(|&v| v == 0.0));
        assert!(m.a_block(1, 0).iter().all(|&v| v == 0.0));
        assert_eq!(build_interconnection_graph(&m, 0.0).edges(), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn pendulum_rejects_short_chains() {
        assert!(build_pendulum_chain::<f64>(1, PendulumParams::default()).is_err());
        let bad = PendulumParams { dt: 0.0, ..Default::default() };
        assert!(build_pendulum_chain::<f64>(3, bad).is_err());
    }

    #[test]
    fn equal_angles_produce_no_spring_force() {
        for count in [2, 3, 6] {
            let params = PendulumParams::default();
            let m = build_pendulum_chain::<f64>(count, params).unwrap();
            let a = m.dense_a();
            for i in 0..count {
                // omega row: coefficients on all theta columns sum to the gravity term only
                let row = 2 * i + 1;
                let theta_sum: f64 = (0..count).map(|j| a[(row, 2 * j)]).sum();
                assert!((theta_sum + params.dt * params.gravity).abs() < 1e-12);
                let omega_sum: f64 = (0..count).map(|j| a[(row, 2 * j + 1)]).sum();
                assert!((omega_sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn benchmark_blocks_are_exact() {
        let m = build_benchmark_chain::<f64>(10).unwrap();
        assert_eq!((m.n(), m.p()), (20, 10));
        assert_eq!(m.a_block(3, 3).as_slice(), DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.3, 0.7]).as_slice());
        assert_eq!(m.a_block(3, 4).as_slice(), DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.1, 0.1]).as_slice());
        assert_eq!(m.b_block(3, 3).as_slice(), &[0.0, 0.1]);
        assert_eq!(build_interconnection_graph(&m, 0.0).edges(), chain_edges(10));

        let single = build_benchmark_chain::<f64>(1).unwrap();
        assert_eq!(single.dense_a(), DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.3, 0.7]));
    }

    #[test]
    fn benchmark_block_counts() {
        let m = build_benchmark_chain::<f64>(3).unwrap();
        let nonzero = |i: usize, j: usize| m.a_block(i, j).iter().any(|&v| v != 0.0);
        let diag = (0..3).filter(|&i| nonzero(i, i)).count();
        let off = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).filter(|&(i, j)| i != j && nonzero(i, j)).count();
        assert_eq!((diag, off), (3, 4));
    }

    #[test]
    fn builders_work_in_single_precision() {
        let m = build_benchmark_chain::<f32>(4).unwrap();
        assert_eq!(m.a_block(0, 0)[(1, 0)], -0.3f32);
    }
}
