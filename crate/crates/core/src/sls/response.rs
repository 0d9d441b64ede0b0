use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{HorizonSpec, LocalityMask, PartitionSets};
use crate::error::{Error, Result};
use crate::model::SubsystemPartition;
use crate::Scalar;

/// Values of `Phi` in the columns owned by one subsystem, restricted to the
/// rows the locality mask allows.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnBlock<T: Scalar> {
    /// Global row indices, ascending.
    pub rows: Vec<usize>,
    /// `rows.len() x n_j` values.
    pub values: DMatrix<T>,
}

/// First block column of `Phi = [Phi_x; Phi_u]`, stored on the mask support.
///
/// Entries outside the support are not representable, so they are zero by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseColumn<T: Scalar> {
    horizon: HorizonSpec,
    partition: SubsystemPartition,
    blocks: Vec<ColumnBlock<T>>,
}

impl<T: Scalar> ResponseColumn<T> {
    pub fn zeros(mask: &LocalityMask, sets: &PartitionSets) -> Self {
        let partition = mask.partition().clone();
        let blocks = sets
            .col_support
            .iter()
            .enumerate()
            .map(|(j, rows)| ColumnBlock { rows: rows.clone(), values: DMatrix::zeros(rows.len(), partition.state_dim(j)) })
            .collect();
        Self { horizon: *mask.horizon(), partition, blocks }
    }

    /// Builds a response from column blocks; row sets must match the mask.
    pub fn from_blocks(mask: &LocalityMask, sets: &PartitionSets, blocks: Vec<ColumnBlock<T>>) -> Result<Self> {
        if blocks.len() != sets.col_support.len() {
            return Err(Error::Dimension(format!("{} column blocks for {} subsystems", blocks.len(), sets.col_support.len())));
        }
        for (j, (b, rows)) in blocks.iter().zip(&sets.col_support).enumerate() {
            if &b.rows != rows || b.values.nrows() != rows.len() || b.values.ncols() != mask.partition().state_dim(j) {
                return Err(Error::Dimension(format!("column block {j} does not match the locality support")));
            }
        }
        Ok(Self { horizon: *mask.horizon(), partition: mask.partition().clone(), blocks })
    }

    /// Copies a dense `rows x n` matrix, rejecting nonzero entries outside the mask.
    pub fn from_dense(mask: &LocalityMask, sets: &PartitionSets, dense: &DMatrix<T>) -> Result<Self> {
        let h = mask.horizon();
        if dense.nrows() != h.rows() || dense.ncols() != h.n() {
            return Err(Error::Dimension(format!(
                "dense response is {}x{}, expected {}x{}",
                dense.nrows(),
                dense.ncols(),
                h.rows(),
                h.n()
            )));
        }
        for r in 0..dense.nrows() {
            for c in 0..dense.ncols() {
                if dense[(r, c)] != T::zero() && !mask.allows(r, c) {
                    return Err(Error::InvalidArgument(format!("entry ({r}, {c}) lies outside the locality mask")));
                }
            }
        }
        let mut out = Self::zeros(mask, sets);
        for (j, block) in out.blocks.iter_mut().enumerate() {
            let cols = mask.partition().state_range(j);
            for (pos, &r) in block.rows.iter().enumerate() {
                for (c, col) in cols.clone().enumerate() {
                    block.values[(pos, c)] = dense[(r, col)];
                }
            }
        }
        Ok(out)
    }

    pub fn horizon(&self) -> &HorizonSpec {
        &self.horizon
    }

    pub fn partition(&self) -> &SubsystemPartition {
        &self.partition
    }

    pub fn blocks(&self) -> &[ColumnBlock<T>] {
        &self.blocks
    }

    pub fn block(&self, j: usize) -> &ColumnBlock<T> {
        &self.blocks[j]
    }

    pub fn block_mut(&mut self, j: usize) -> &mut ColumnBlock<T> {
        &mut self.blocks[j]
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut out = DMatrix::zeros(self.horizon.rows(), self.horizon.n());
        for (j, block) in self.blocks.iter().enumerate() {
            let c0 = self.partition.state_range(j).start;
            for (pos, &r) in block.rows.iter().enumerate() {
                for c in 0..block.values.ncols() {
                    out[(r, c0 + c)] = block.values[(pos, c)];
                }
            }
        }
        out
    }

    /// Entry at global `(row, col)`; zero off the support.
    pub fn get(&self, row: usize, col: usize) -> T {
        let j = self.partition.state_owner(col);
        let c = col - self.partition.state_range(j).start;
        let block = &self.blocks[j];
        match block.rows.binary_search(&row) {
            Ok(pos) => block.values[(pos, c)],
            Err(_) => T::zero(),
        }
    }

    /// `Phi_x[t]`, an `n x n` matrix.
    pub fn phi_x_block(&self, t: usize) -> DMatrix<T> {
        let n = self.horizon.n();
        self.to_dense().rows(t * n, n).into_owned()
    }

    /// `Phi_u[t]`, a `p x n` matrix.
    pub fn phi_u_block(&self, t: usize) -> DMatrix<T> {
        let p = self.horizon.p();
        self.to_dense().rows(self.horizon.state_rows() + t * p, p).into_owned()
    }

    /// `Phi x0` as one stacked vector in row order.
    pub fn apply(&self, x0: &DVector<T>) -> Result<DVector<T>> {
        if x0.len() != self.horizon.n() {
            return Err(Error::Dimension(format!("x0 has {} entries, expected {}", x0.len(), self.horizon.n())));
        }
        let mut out = DVector::zeros(self.horizon.rows());
        for (j, block) in self.blocks.iter().enumerate() {
            let xs = x0.rows(self.partition.state_range(j).start, block.values.ncols());
            let contrib = &block.values * xs;
            for (pos, &r) in block.rows.iter().enumerate() {
                out[r] += contrib[pos];
            }
        }
        Ok(out)
    }

    /// Largest absolute entry difference against another response on the same support.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        (self.to_dense() - other.to_dense()).amax()
    }

    pub fn frobenius_diff(&self, other: &Self) -> T {
        (self.to_dense() - other.to_dense()).norm()
    }

    pub fn to_file(&self) -> ResponseFile<T> {
        ResponseFile {
            format: RESPONSE_FORMAT.to_string(),
            horizon: self.horizon.horizon(),
            state_dims: self.partition.state_dims().to_vec(),
            input_dims: self.partition.input_dims().to_vec(),
            columns: self
                .blocks
                .iter()
                .map(|b| FileColumn {
                    rows: b.rows.clone(),
                    values: (0..b.values.nrows()).flat_map(|r| b.values.row(r).iter().copied().collect::<Vec<_>>()).collect(),
                })
                .collect(),
        }
    }

    pub fn from_file(file: ResponseFile<T>) -> Result<Self> {
        if file.format != RESPONSE_FORMAT {
            return Err(Error::InvalidArgument(format!("unknown response format {:?}", file.format)));
        }
        let partition = SubsystemPartition::new(file.state_dims, file.input_dims)?;
        let horizon = HorizonSpec::for_partition(file.horizon, &partition)?;
        if file.columns.len() != partition.count() {
            return Err(Error::Dimension("one column entry per subsystem required".into()));
        }
        let mut blocks = Vec::with_capacity(file.columns.len());
        for (j, col) in file.columns.into_iter().enumerate() {
            let nj = partition.state_dim(j);
            if col.values.len() != col.rows.len() * nj {
                return Err(Error::Dimension(format!("column {j}: value count does not match rows")));
            }
            if col.rows.windows(2).any(|w| w[0] >= w[1]) || col.rows.iter().any(|&r| r >= horizon.rows()) {
                return Err(Error::InvalidArgument(format!("column {j}: rows must be ascending and in range")));
            }
            let values = DMatrix::from_row_slice(col.rows.len(), nj, &col.values);
            blocks.push(ColumnBlock { rows: col.rows, values });
        }
        Ok(Self { horizon, partition, blocks })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }
}

pub const RESPONSE_FORMAT: &str = "dlmpc-response/1";

/// Serialized response: per column subsystem, the supported rows and the
/// row-major values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ResponseFile<T: Scalar> {
    pub format: String,
    pub horizon: usize,
    pub state_dims: Vec<usize>,
    pub input_dims: Vec<usize>,
    pub columns: Vec<FileColumn<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FileColumn<T: Scalar> {
    pub rows: Vec<usize>,
    pub values: Vec<T>,
}

/// Predicted state and input sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar> {
    /// `x_0, ..., x_T`.
    pub states: Vec<DVector<T>>,
    /// `u_0, ..., u_{T-1}`.
    pub inputs: Vec<DVector<T>>,
}

impl<T: Scalar> Trajectory<T> {
    /// Splits a vector stacked in `Phi` row order.
    pub fn from_stacked(h: &HorizonSpec, stacked: &DVector<T>) -> Result<Self> {
        if stacked.len() != h.rows() {
            return Err(Error::Dimension(format!("stacked trajectory has {} entries, expected {}", stacked.len(), h.rows())));
        }
        let (n, p) = (h.n(), h.p());
        let states = (0..=h.horizon()).map(|t| stacked.rows(t * n, n).into_owned()).collect();
        let inputs = (0..h.horizon()).map(|t| stacked.rows(h.state_rows() + t * p, p).into_owned()).collect();
        Ok(Self { states, inputs })
    }

    pub fn stacked(&self) -> DVector<T> {
        let parts: Vec<&DVector<T>> = self.states.iter().chain(&self.inputs).collect();
        let len = parts.iter().map(|v| v.len()).sum();
        let mut out = DVector::zeros(len);
        let mut at = 0;
        for v in parts {
            out.rows_mut(at, v.len()).copy_from(v);
            at += v.len();
        }
        out
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    /// Largest `||x_{t+1} - A x_t - B u_t||_inf` over the horizon.
    pub fn dynamics_residual(&self, model: &crate::model::SystemModel<T>) -> T {
        let mut worst = T::zero();
        for t in 0..self.horizon() {
            let pred = model.step(&self.states[t], &self.inputs[t], None);
            let r = (&self.states[t + 1] - pred).amax();
            if r > worst {
                worst = r;
            }
        }
        worst
    }
}

/// `x = Phi_x x0`, `u = Phi_u x0` split by time.
pub fn reconstruct_trajectory<T: Scalar>(phi: &ResponseColumn<T>, x0: &DVector<T>) -> Result<Trajectory<T>> {
    let stacked = phi.apply(x0)?;
    Trajectory::from_stacked(phi.horizon(), &stacked)
}
