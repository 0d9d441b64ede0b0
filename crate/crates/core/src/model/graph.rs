use std::collections::{BTreeSet, VecDeque};

use super::SystemModel;
use crate::error::Result;
use crate::Scalar;

/// Directed interconnection graph of a block-partitioned plant.
///
/// The pair `(i, j)` is an edge iff `[A]_{ij}` or `[B]_{ij}` is nonzero, i.e.
/// subsystem `j` acts on subsystem `i`. Hop distances follow the direction of
/// influence, so `dist(j -> i) = 1` for every edge `(i, j)` with `i != j`:
/// a disturbance entering at `j` reaches `out_j(d)` within `d` hops, and
/// `in_i(d)` collects every subsystem that reaches `i` within `d` hops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterconnectionGraph {
    /// `influenced_by[i]`: sorted `j` with edge `(i, j)`.
    influenced_by: Vec<Vec<usize>>,
    /// `influences[j]`: sorted `i` with edge `(i, j)`.
    influences: Vec<Vec<usize>>,
}

impl InterconnectionGraph {
    /// Builds a graph from `(i, j)` edge pairs over `count` vertices.
    pub fn from_edges(count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut by = vec![BTreeSet::new(); count];
        let mut on = vec![BTreeSet::new(); count];
        for (i, j) in edges {
            by[i].insert(j);
            on[j].insert(i);
        }
        Self {
            influenced_by: by.into_iter().map(|s| s.into_iter().collect()).collect(),
            influences: on.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.influenced_by.len()
    }

    /// All edges `(i, j)` in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.influenced_by
            .iter()
            .enumerate()
            .flat_map(|(i, js)| js.iter().map(move |&j| (i, j)))
            .collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.influenced_by[i].binary_search(&j).is_ok()
    }

    /// `out_i(d)`: vertices reachable from `i` in at most `d` hops, sorted.
    pub fn d_outgoing(&self, i: usize, d: usize) -> Result<Vec<usize>> {
        self.ball(i, d, &self.influences)
    }

    /// `in_i(d)`: vertices that reach `i` in at most `d` hops, sorted.
    pub fn d_incoming(&self, i: usize, d: usize) -> Result<Vec<usize>> {
        self.ball(i, d, &self.influenced_by)
    }

    /// Union of `in_i(d)` and `out_i(d)`.
    pub fn d_neighborhood(&self, i: usize, d: usize) -> Result<Vec<usize>> {
        let mut set: BTreeSet<usize> = self.d_outgoing(i, d)?.into_iter().collect();
        set.extend(self.d_incoming(i, d)?);
        Ok(set.into_iter().collect())
    }

    fn ball(&self, start: usize, radius: usize, next: &[Vec<usize>]) -> Result<Vec<usize>> {
        if start >= self.count() {
            return Err(crate::Error::IndexOutOfRange { index: start, count: self.count() });
        }
        let mut dist = vec![usize::MAX; self.count()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            if dist[v] == radius {
                continue;
            }
            for &w in &next[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        Ok((0..self.count()).filter(|&v| dist[v] != usize::MAX).collect())
    }
}

/// Graph whose edges match the nonzero block supports of `(A, B)`.
///
/// `threshold` is the magnitude a block entry must exceed to count as
/// nonzero; builders produce exact zeros, so `0.0` is the usual choice.
pub fn build_interconnection_graph<T: Scalar>(model: &SystemModel<T>, threshold: T) -> InterconnectionGraph {
    let count = model.count();
    let edges = (0..count)
        .flat_map(|i| (0..count).map(move |j| (i, j)))
        .filter(|&(i, j)| model.block_coupled(i, j, threshold));
    InterconnectionGraph::from_edges(count, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_benchmark_chain, SubsystemPartition};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn chain(count: usize) -> InterconnectionGraph {
        let edges = (0..count).flat_map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(count - 1);
            (lo..=hi).map(move |j| (i, j))
        });
        InterconnectionGraph::from_edges(count, edges)
    }

    #[test]
    fn chain_model_graph_is_tridiagonal() {
        let model = build_benchmark_chain::<f64>(3).unwrap();
        let g = build_interconnection_graph(&model, 0.0);
        assert_eq!(g.edges(), vec![(0, 0), (0, 1), (1, 0), (1, 1), (1, 2), (2, 1), (2, 2)]);
        assert_eq!(g, build_interconnection_graph(&model, 0.0));
    }

    #[test]
    fn zero_and_dense_models() {
        let part = SubsystemPartition::uniform(3, 1, 1).unwrap();
        let zero = SystemModel::from_dense(part.clone(), &DMatrix::zeros(3, 3), &DMatrix::zeros(3, 3), 1.0).unwrap();
        assert!(build_interconnection_graph(&zero, 0.0).edges().is_empty());
        let dense =
            SystemModel::from_dense(part, &DMatrix::from_element(3, 3, 1.0), &DMatrix::zeros(3, 3), 1.0).unwrap();
        assert_eq!(build_interconnection_graph(&dense, 0.0).edges().len(), 9);
    }

    #[test]
    fn threshold_filters_small_blocks() {
        let part = SubsystemPartition::uniform(2, 1, 1).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1e-12, 0.0, 1.0]);
        let m = SystemModel::from_dense(part, &a, &DMatrix::identity(2, 2), 1.0).unwrap();
        assert!(build_interconnection_graph(&m, 0.0).has_edge(0, 1));
        assert!(!build_interconnection_graph(&m, 1e-9).has_edge(0, 1));
    }

    #[test]
    fn chain_neighborhoods() {
        let g = chain(10);
        assert_eq!(g.d_outgoing(4, 1).unwrap(), vec![3, 4, 5]);
        assert_eq!(g.d_incoming(4, 2).unwrap(), vec![2, 3, 4, 5, 6]);
        assert_eq!(g.d_incoming(0, 0).unwrap(), vec![0]);
        assert_eq!(g.d_outgoing(7, 0).unwrap(), vec![7]);
        assert!(g.d_outgoing(10, 1).is_err());
    }

    #[test]
    fn directed_orientation_follows_influence() {
        // subsystem 0 drives 1 ([A]_{10} != 0), not the other way round
        let g = InterconnectionGraph::from_edges(2, [(0, 0), (1, 1), (1, 0)]);
        assert_eq!(g.d_outgoing(0, 1).unwrap(), vec![0, 1]);
        assert_eq!(g.d_outgoing(1, 1).unwrap(), vec![1]);
        assert_eq!(g.d_incoming(1, 1).unwrap(), vec![0, 1]);
        assert_eq!(g.d_neighborhood(1, 1).unwrap(), vec![0, 1]);
    }

    fn arb_graph() -> impl Strategy<Value = InterconnectionGraph> {
        (2usize..8).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 0..20).prop_map(move |e| InterconnectionGraph::from_edges(n, e))
        })
    }

    proptest! {
        #[test]
        fn neighborhoods_are_monotone_and_dual(g in arb_graph(), d1 in 0usize..4, extra in 0usize..3) {
            let d2 = d1 + extra;
            for i in 0..g.count() {
                let small = g.d_outgoing(i, d1).unwrap();
                let big = g.d_outgoing(i, d2).unwrap();
                prop_assert!(small.iter().all(|v| big.contains(v)));
                prop_assert!(small.contains(&i));
                let small_in = g.d_incoming(i, d1).unwrap();
                let big_in = g.d_incoming(i, d2).unwrap();
                prop_assert!(small_in.iter().all(|v| big_in.contains(v)));
                for j in 0..g.count() {
                    let fwd = g.d_outgoing(i, d1).unwrap().contains(&j);
                    let back = g.d_incoming(j, d1).unwrap().contains(&i);
                    prop_assert_eq!(fwd, back);
                }
            }
        }

        #[test]
        fn saturated_radius_covers_reachable_set(g in arb_graph()) {
            let n = g.count();
            for i in 0..n {
                prop_assert_eq!(g.d_outgoing(i, n - 1).unwrap(), g.d_outgoing(i, n + 5).unwrap());
            }
        }
    }
}
