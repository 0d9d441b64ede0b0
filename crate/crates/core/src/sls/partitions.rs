use super::LocalityMask;
use crate::error::{Error, Result};
use crate::model::SubsystemPartition;

/// Row and column ownership of `Phi` per subsystem, plus the index sets the
/// locality mask couples to them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSets {
    /// Rows owned by each subsystem (its state and input rows at every step),
    /// in local trajectory order.
    pub rows: Vec<Vec<usize>>,
    /// Columns owned by each subsystem (its initial-state components).
    pub cols: Vec<Vec<usize>>,
    /// Columns that may be nonzero in the owned rows, ascending.
    pub row_support: Vec<Vec<usize>>,
    /// Rows that may be nonzero in the owned columns, ascending.
    pub col_support: Vec<Vec<usize>>,
}

pub fn build_partitions(mask: &LocalityMask, partition: &SubsystemPartition) -> Result<PartitionSets> {
    if mask.partition() != partition {
        return Err(Error::Dimension("mask was built for a different partition".into()));
    }
    let h = mask.horizon();
    let count = partition.count();
    let rows: Vec<Vec<usize>> = (0..count).map(|i| h.owned_rows(partition, i)).collect();
    let cols: Vec<Vec<usize>> = (0..count).map(|i| partition.state_range(i).collect()).collect();

    let row_support = (0..count)
        .map(|i| {
            let mut subs = Vec::new();
            if partition.state_dim(i) > 0 {
                subs.extend(mask.state_columns_of_row(i));
            }
            if partition.input_dim(i) > 0 {
                subs.extend(mask.input_columns_of_row(i));
            }
            subs.sort_unstable();
            subs.dedup();
            subs.into_iter().flat_map(|j| partition.state_range(j)).collect()
        })
        .collect();

    let col_support = (0..count)
        .map(|j| {
            let xs = mask.state_rows_of_column(j);
            let us = mask.input_rows_of_column(j);
            let mut out = Vec::new();
            for t in 0..=h.horizon() {
                for &i in &xs {
                    out.extend(partition.state_range(i).map(|k| h.x_row(t, k)));
                }
            }
            for t in 0..h.horizon() {
                for &i in &us {
                    out.extend(partition.input_range(i).map(|k| h.u_row(t, k)));
                }
            }
            out
        })
        .collect();

    Ok(PartitionSets { rows, cols, row_support, col_support })
}
