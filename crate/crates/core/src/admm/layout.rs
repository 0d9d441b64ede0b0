use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::agents::ModelReader;
use crate::error::Result;
use crate::kernels::ColumnProjector;
use crate::model::{InterconnectionGraph, SubsystemPartition};
use crate::sls::{HorizonSpec, LocalityMask, PartitionSets, RowKind};
use crate::Scalar;

/// Owner of a row of `Phi`.
pub fn row_owner(h: &HorizonSpec, partition: &SubsystemPartition, row: usize) -> usize {
    match h.row_kind(row) {
        RowKind::State { index, .. } => partition.state_owner(index),
        RowKind::Input { index, .. } => partition.input_owner(index),
    }
}

/// The rows of `Phi` one subsystem owns, as a dense `rows x support` slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowLayout {
    pub subsystem: usize,
    /// Global rows in local trajectory order.
    pub rows: Vec<usize>,
    /// Global columns that may be nonzero in these rows, ascending.
    pub support: Vec<usize>,
    /// Per local row, the support positions the mask allows.
    pub allowed: Vec<Vec<usize>>,
    /// Per column owner `j`: the local rows allowed on `j`'s columns and the
    /// support positions of those columns.
    pub by_column_owner: Vec<(usize, Vec<usize>, Vec<usize>)>,
}

impl RowLayout {
    pub fn new(mask: &LocalityMask, sets: &PartitionSets, i: usize) -> Self {
        let partition = mask.partition();
        let rows = sets.rows[i].clone();
        let support = sets.row_support[i].clone();
        let allowed =
            rows.iter().map(|&r| (0..support.len()).filter(|&p| mask.allows(r, support[p])).collect()).collect();
        let owners: BTreeSet<usize> = support.iter().map(|&c| partition.state_owner(c)).collect();
        let by_column_owner = owners
            .into_iter()
            .map(|j| {
                let positions: Vec<usize> = (0..support.len()).filter(|&p| partition.state_owner(support[p]) == j).collect();
                let first = support[positions[0]];
                let local: Vec<usize> = (0..rows.len()).filter(|&r| mask.allows(rows[r], first)).collect();
                (j, local, positions)
            })
            .collect();
        Self { subsystem: i, rows, support, allowed, by_column_owner }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.support.len()
    }

    /// Number of free entries of the row slice.
    pub fn unknowns(&self) -> usize {
        self.allowed.iter().map(Vec::len).sum()
    }

    /// Zeros every entry the mask forbids.
    pub fn apply_mask<T: Scalar>(&self, m: &mut DMatrix<T>) {
        for (r, allowed) in self.allowed.iter().enumerate() {
            let mut next = allowed.iter().peekable();
            for p in 0..m.ncols() {
                if next.peek() == Some(&&p) {
                    next.next();
                } else {
                    m[(r, p)] = T::zero();
                }
            }
        }
    }
}

/// The columns of `Phi` one subsystem owns, as a dense `support x cols` slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnLayout {
    pub subsystem: usize,
    pub cols: Vec<usize>,
    /// Global rows that may be nonzero in these columns, ascending.
    pub rows: Vec<usize>,
    /// Per row owner `i`: positions in `rows` owned by `i`.
    pub by_row_owner: Vec<(usize, Vec<usize>)>,
}

impl ColumnLayout {
    pub fn new(mask: &LocalityMask, sets: &PartitionSets, j: usize) -> Self {
        let h = mask.horizon();
        let partition = mask.partition();
        let rows = sets.col_support[j].clone();
        let owners: BTreeSet<usize> = rows.iter().map(|&r| row_owner(h, partition, r)).collect();
        let by_row_owner = owners
            .into_iter()
            .map(|i| (i, (0..rows.len()).filter(|&p| row_owner(h, partition, rows[p]) == i).collect()))
            .collect();
        Self { subsystem: j, cols: sets.cols[j].clone(), rows, by_row_owner }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn position(&self, row: usize) -> Option<usize> {
        self.rows.binary_search(&row).ok()
    }
}

/// Local achievability system of column owner `j`: the state equations of
/// every subsystem the column's support can reach in one step, restricted
/// to the support. Model blocks are read through `reader`.
pub fn local_achievability<T: Scalar>(
    reader: &mut ModelReader<'_, T>,
    graph: &InterconnectionGraph,
    mask: &LocalityMask,
    layout: &ColumnLayout,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let h = mask.horizon();
    let partition = mask.partition();
    let j = layout.subsystem;
    let state_subs = mask.state_rows_of_column(j);
    let input_subs = mask.input_rows_of_column(j);
    let mut targets: BTreeSet<usize> = state_subs.iter().copied().collect();
    for &l in &state_subs {
        targets.extend(graph.d_outgoing(l, 1)?);
    }
    for &l in &input_subs {
        targets.extend((0..partition.count()).filter(|&k| reader.input_coupled(k, l)));
    }
    let nj = layout.cols.len();
    let mut z_rows: Vec<Vec<(usize, T)>> = Vec::new();
    let mut rhs_rows: Vec<Vec<T>> = Vec::new();

    for &k in &state_subs {
        for a in partition.state_range(k) {
            let pos = layout.position(h.x_row(0, a)).expect("initial state row in support");
            z_rows.push(vec![(pos, T::one())]);
            rhs_rows.push(layout.cols.iter().map(|&c| if c == a { T::one() } else { T::zero() }).collect());
        }
    }

    let mut a_blocks = Vec::new();
    let mut b_blocks = Vec::new();
    for &k in &targets {
        let a_terms: Vec<(usize, &DMatrix<T>)> =
            state_subs.iter().filter(|&&l| graph.has_edge(k, l)).map(|&l| (l, reader.a_block(k, l))).collect();
        let coupled: Vec<usize> = input_subs.iter().copied().filter(|&l| reader.input_coupled(k, l)).collect();
        let b_terms: Vec<(usize, &DMatrix<T>)> = coupled.into_iter().map(|l| (l, reader.b_block(k, l))).collect();
        a_blocks.push(a_terms);
        b_blocks.push(b_terms);
    }

    for t in 0..h.horizon() {
        for (ti, &k) in targets.iter().enumerate() {
            let in_support = state_subs.binary_search(&k).is_ok();
            for (a_local, a) in partition.state_range(k).enumerate() {
                let mut row = Vec::new();
                if in_support {
                    row.push((layout.position(h.x_row(t + 1, a)).expect("state row in support"), T::one()));
                }
                for (l, blk) in &a_blocks[ti] {
                    for (c_local, c) in partition.state_range(*l).enumerate() {
                        let v = blk[(a_local, c_local)];
                        if v != T::zero() {
                            row.push((layout.position(h.x_row(t, c)).expect("state row in support"), -v));
                        }
                    }
                }
                for (l, blk) in &b_blocks[ti] {
                    for (c_local, c) in partition.input_range(*l).enumerate() {
                        let v = blk[(a_local, c_local)];
                        if v != T::zero() {
                            row.push((layout.position(h.u_row(t, c)).expect("input row in support"), -v));
                        }
                    }
                }
                if !row.is_empty() {
                    z_rows.push(row);
                    rhs_rows.push(vec![T::zero(); nj]);
                }
            }
        }
    }

    let mut z = DMatrix::zeros(z_rows.len(), layout.len());
    let mut rhs = DMatrix::zeros(z_rows.len(), nj);
    for (r, (row, b)) in z_rows.iter().zip(&rhs_rows).enumerate() {
        for &(c, v) in row {
            z[(r, c)] += v;
        }
        for (c, &v) in b.iter().enumerate() {
            rhs[(r, c)] = v;
        }
    }
    Ok((z, rhs))
}

/// Projector for the column update of subsystem `layout.subsystem`.
pub fn build_column_projector<T: Scalar>(
    reader: &mut ModelReader<'_, T>,
    graph: &InterconnectionGraph,
    mask: &LocalityMask,
    layout: &ColumnLayout,
) -> Result<ColumnProjector<T>> {
    let (z, rhs) = local_achievability(reader, graph, mask, layout)?;
    ColumnProjector::new(layout.subsystem, z, rhs)
}
