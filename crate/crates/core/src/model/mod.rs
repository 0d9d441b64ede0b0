//! Block-partitioned LTI plants `x(t+1) = A x(t) + B u(t) + w(t)`.
//!
//! Matrices are stored block-wise: block `(i, j)` of `A` maps the state of
//! subsystem `j` into the next state of subsystem `i`. Dense global matrices
//! are assembled on demand.

mod builders;
mod graph;
mod io;

pub use builders::{build_benchmark_chain, build_pendulum_chain, PendulumParams};
pub use graph::{build_interconnection_graph, InterconnectionGraph};
pub use io::{read_model, write_model, ModelFile};

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::Scalar;

/// Per-subsystem state and input dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsystemPartition {
    state_dims: Vec<usize>,
    input_dims: Vec<usize>,
    state_offsets: Vec<usize>,
    input_offsets: Vec<usize>,
}

impl SubsystemPartition {
    pub fn new(state_dims: Vec<usize>, input_dims: Vec<usize>) -> Result<Self> {
        if state_dims.is_empty() {
            return Err(Error::InvalidArgument("partition needs at least one subsystem".into()));
        }
        if state_dims.len() != input_dims.len() {
            return Err(Error::Dimension(format!(
                "{} state dims vs {} input dims",
                state_dims.len(),
                input_dims.len()
            )));
        }
        if state_dims.iter().all(|&n| n == 0) {
            return Err(Error::InvalidArgument("at least one subsystem must carry state".into()));
        }
        let offsets = |dims: &[usize]| {
            let mut acc = 0;
            let mut out = Vec::with_capacity(dims.len() + 1);
            for &d in dims {
                out.push(acc);
                acc += d;
            }
            out.push(acc);
            out
        };
        Ok(Self {
            state_offsets: offsets(&state_dims),
            input_offsets: offsets(&input_dims),
            state_dims,
            input_dims,
        })
    }

    /// `count` identical subsystems with `n_i` states and `p_i` inputs each.
    pub fn uniform(count: usize, n_i: usize, p_i: usize) -> Result<Self> {
        Self::new(vec![n_i; count], vec![p_i; count])
    }

    pub fn count(&self) -> usize {
        self.state_dims.len()
    }

    /// Global state dimension `n`.
    pub fn n(&self) -> usize {
        *self.state_offsets.last().unwrap()
    }

    /// Global input dimension `p`.
    pub fn p(&self) -> usize {
        *self.input_offsets.last().unwrap()
    }

    pub fn state_dim(&self, i: usize) -> usize {
        self.state_dims[i]
    }

    pub fn input_dim(&self, i: usize) -> usize {
        self.input_dims[i]
    }

    pub fn state_dims(&self) -> &[usize] {
        &self.state_dims
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn state_range(&self, i: usize) -> Range<usize> {
        self.state_offsets[i]..self.state_offsets[i + 1]
    }

    pub fn input_range(&self, i: usize) -> Range<usize> {
        self.input_offsets[i]..self.input_offsets[i + 1]
    }

    /// Subsystem owning global state component `k`.
    pub fn state_owner(&self, k: usize) -> usize {
        self.state_offsets.partition_point(|&o| o <= k) - 1
    }

    /// Subsystem owning global input component `k`.
    pub fn input_owner(&self, k: usize) -> usize {
        self.input_offsets.partition_point(|&o| o <= k) - 1
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.count() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: i, count: self.count() })
        }
    }
}

/// Discrete-time plant with block-indexed `A` and `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel<T: Scalar> {
    partition: SubsystemPartition,
    a_blocks: Vec<DMatrix<T>>,
    b_blocks: Vec<DMatrix<T>>,
    dt: f64,
}

impl<T: Scalar> SystemModel<T> {
    /// Builds a model from row-major lists of `N x N` blocks.
    pub fn from_blocks(
        partition: SubsystemPartition,
        a_blocks: Vec<DMatrix<T>>,
        b_blocks: Vec<DMatrix<T>>,
        dt: f64,
    ) -> Result<Self> {
        let count = partition.count();
        if a_blocks.len() != count * count || b_blocks.len() != count * count {
            return Err(Error::Dimension(format!(
                "expected {} blocks, got {} (A) and {} (B)",
                count * count,
                a_blocks.len(),
                b_blocks.len()
            )));
        }
        for i in 0..count {
            for j in 0..count {
                let a = &a_blocks[i * count + j];
                let b = &b_blocks[i * count + j];
                if a.shape() != (partition.state_dim(i), partition.state_dim(j)) {
                    return Err(Error::Dimension(format!("A block ({i},{j}) has shape {:?}", a.shape())));
                }
                if b.shape() != (partition.state_dim(i), partition.input_dim(j)) {
                    return Err(Error::Dimension(format!("B block ({i},{j}) has shape {:?}", b.shape())));
                }
                if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(format!("non-finite entry in block ({i},{j})")));
                }
            }
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { partition, a_blocks, b_blocks, dt })
    }

    /// Slices dense `A` (n x n) and `B` (n x p) into blocks.
    pub fn from_dense(partition: SubsystemPartition, a: &DMatrix<T>, b: &DMatrix<T>, dt: f64) -> Result<Self> {
        let (n, p) = (partition.n(), partition.p());
        if a.shape() != (n, n) || b.shape() != (n, p) {
            return Err(Error::Dimension(format!(
                "dense A {:?} / B {:?} do not match n={n}, p={p}",
                a.shape(),
                b.shape()
            )));
        }
        let count = partition.count();
        let mut a_blocks = Vec::with_capacity(count * count);
        let mut b_blocks = Vec::with_capacity(count * count);
        for i in 0..count {
            let ri = partition.state_range(i);
            for j in 0..count {
                let cj = partition.state_range(j);
                let uj = partition.input_range(j);
                a_blocks.push(a.view((ri.start, cj.start), (ri.len(), cj.len())).into_owned());
                b_blocks.push(b.view((ri.start, uj.start), (ri.len(), uj.len())).into_owned());
            }
        }
        Self::from_blocks(partition, a_blocks, b_blocks, dt)
    }

    pub fn partition(&self) -> &SubsystemPartition {
        &self.partition
    }

    pub fn count(&self) -> usize {
        self.partition.count()
    }

    pub fn n(&self) -> usize {
        self.partition.n()
    }

    pub fn p(&self) -> usize {
        self.partition.p()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn a_block(&self, i: usize, j: usize) -> &DMatrix<T> {
        &self.a_blocks[i * self.count() + j]
    }

    pub fn b_block(&self, i: usize, j: usize) -> &DMatrix<T> {
        &self.b_blocks[i * self.count() + j]
    }

    pub fn dense_a(&self) -> DMatrix<T> {
        let n = self.n();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..self.count() {
            let ri = self.partition.state_range(i);
            for j in 0..self.count() {
                let cj = self.partition.state_range(j);
                a.view_mut((ri.start, cj.start), (ri.len(), cj.len())).copy_from(self.a_block(i, j));
            }
        }
        a
    }

    pub fn dense_b(&self) -> DMatrix<T> {
        let (n, p) = (self.n(), self.p());
        let mut b = DMatrix::zeros(n, p);
        for i in 0..self.count() {
            let ri = self.partition.state_range(i);
            for j in 0..self.count() {
                let cj = self.partition.input_range(j);
                b.view_mut((ri.start, cj.start), (ri.len(), cj.len())).copy_from(self.b_block(i, j));
            }
        }
        b
    }

    /// One plant step `A x + B u + w`.
    pub fn step(&self, x: &DVector<T>, u: &DVector<T>, w: Option<&DVector<T>>) -> DVector<T> {
        let mut next = DVector::zeros(self.n());
        for i in 0..self.count() {
            let ri = self.partition.state_range(i);
            let mut acc = DVector::<T>::zeros(ri.len());
            for j in 0..self.count() {
                let a = self.a_block(i, j);
                let b = self.b_block(i, j);
                if a.nrows() > 0 && a.ncols() > 0 {
                    acc += a * x.rows(self.partition.state_range(j).start, a.ncols());
                }
                if b.nrows() > 0 && b.ncols() > 0 {
                    acc += b * u.rows(self.partition.input_range(j).start, b.ncols());
                }
            }
            next.rows_mut(ri.start, ri.len()).copy_from(&acc);
        }
        if let Some(w) = w {
            next += w;
        }
        next
    }

    /// Whether block `(i, j)` of `A` or `B` has an entry above `threshold` in magnitude.
    pub fn block_coupled(&self, i: usize, j: usize, threshold: T) -> bool {
        let nonzero = |m: &DMatrix<T>| m.iter().any(|v| v.magnitude() > threshold);
        nonzero(self.a_block(i, j)) || nonzero(self.b_block(i, j))
    }
}
