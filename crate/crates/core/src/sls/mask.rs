use super::{HorizonSpec, RowKind};
use crate::error::Result;
use crate::model::{InterconnectionGraph, SubsystemPartition};

/// Block support of the first column of `Phi` under a `d`-locality constraint.
///
/// State block `(i, j)` is allowed iff `i` is in `out_j(d)`; input block
/// `(i, j)` iff `i` is in `out_j(d + 1)`. The pattern repeats at every
/// prediction step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalityMask {
    radius: usize,
    horizon: HorizonSpec,
    partition: SubsystemPartition,
    state_allowed: Vec<bool>,
    input_allowed: Vec<bool>,
}

pub fn build_locality_mask(
    graph: &InterconnectionGraph,
    partition: &SubsystemPartition,
    d: usize,
    horizon: HorizonSpec,
) -> Result<LocalityMask> {
    let count = graph.count();
    if count != partition.count() {
        return Err(crate::Error::Dimension(format!(
            "graph has {count} vertices, partition {} subsystems",
            partition.count()
        )));
    }
    let mut state_allowed = vec![false; count * count];
    let mut input_allowed = vec![false; count * count];
    for j in 0..count {
        for i in graph.d_outgoing(j, d)? {
            state_allowed[i * count + j] = true;
        }
        for i in graph.d_outgoing(j, d + 1)? {
            input_allowed[i * count + j] = true;
        }
    }
    Ok(LocalityMask { radius: d, horizon, partition: partition.clone(), state_allowed, input_allowed })
}

impl LocalityMask {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn horizon(&self) -> &HorizonSpec {
        &self.horizon
    }

    pub fn partition(&self) -> &SubsystemPartition {
        &self.partition
    }

    pub fn count(&self) -> usize {
        self.partition.count()
    }

    pub fn state_block(&self, i: usize, j: usize) -> bool {
        self.state_allowed[i * self.count() + j]
    }

    pub fn input_block(&self, i: usize, j: usize) -> bool {
        self.input_allowed[i * self.count() + j]
    }

    /// Entry-level query on the global `Phi` indices.
    pub fn allows(&self, row: usize, col: usize) -> bool {
        let j = self.partition.state_owner(col);
        match self.horizon.row_kind(row) {
            RowKind::State { index, .. } => self.state_block(self.partition.state_owner(index), j),
            RowKind::Input { index, .. } => self.input_block(self.partition.input_owner(index), j),
        }
    }

    /// Subsystems whose state rows may respond to column subsystem `j`.
    pub fn state_rows_of_column(&self, j: usize) -> Vec<usize> {
        (0..self.count()).filter(|&i| self.state_block(i, j)).collect()
    }

    pub fn input_rows_of_column(&self, j: usize) -> Vec<usize> {
        (0..self.count()).filter(|&i| self.input_block(i, j)).collect()
    }

    /// Column subsystems allowed in the state rows of `i`.
    pub fn state_columns_of_row(&self, i: usize) -> Vec<usize> {
        (0..self.count()).filter(|&j| self.state_block(i, j)).collect()
    }

    pub fn input_columns_of_row(&self, i: usize) -> Vec<usize> {
        (0..self.count()).filter(|&j| self.input_block(i, j)).collect()
    }

    /// Number of allowed scalar entries.
    pub fn support_size(&self) -> usize {
        let part = &self.partition;
        let steps_x = self.horizon.horizon() + 1;
        let steps_u = self.horizon.horizon();
        let mut total = 0;
        for i in 0..self.count() {
            for j in 0..self.count() {
                if self.state_block(i, j) {
                    total += steps_x * part.state_dim(i) * part.state_dim(j);
                }
                if self.input_block(i, j) {
                    total += steps_u * part.input_dim(i) * part.state_dim(j);
                }
            }
        }
        total
    }

    /// Whether every entry allowed by `other` is also allowed here.
    pub fn covers(&self, other: &LocalityMask) -> bool {
        self.state_allowed.len() == other.state_allowed.len()
            && other.state_allowed.iter().zip(&self.state_allowed).all(|(&o, &s)| !o || s)
            && other.input_allowed.iter().zip(&self.input_allowed).all(|(&o, &s)| !o || s)
    }

    pub fn is_dense(&self) -> bool {
        self.state_allowed.iter().chain(&self.input_allowed).all(|&b| b)
    }
}
