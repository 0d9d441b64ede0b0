use std::collections::BTreeSet;

use crate::error::Result;
use crate::model::InterconnectionGraph;

/// Directed channels agents may use.
///
/// Channel `i -> j` exists iff `j` lies within `d + 1` hops of `i` in either
/// direction of the interconnection graph: row owners send `Phi` rows to
/// the owners of columns in `in_i(d + 1)`, column owners send `Psi` columns
/// back to `out_j(d + 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelTopology {
    radius: usize,
    targets: Vec<BTreeSet<usize>>,
}

pub fn build_channels(graph: &InterconnectionGraph, d: usize) -> Result<ChannelTopology> {
    let count = graph.count();
    let mut targets = vec![BTreeSet::new(); count];
    for (i, t) in targets.iter_mut().enumerate() {
        t.extend(graph.d_outgoing(i, d + 1)?);
        t.extend(graph.d_incoming(i, d + 1)?);
    }
    Ok(ChannelTopology { radius: d, targets })
}

impl ChannelTopology {
    /// Locality radius `d` the topology was built for.
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn count(&self) -> usize {
        self.targets.len()
    }

    pub fn allows(&self, from: usize, to: usize) -> bool {
        self.targets.get(from).is_some_and(|t| t.contains(&to))
    }

    /// Agents `i` may send to, ascending.
    pub fn targets(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.targets[i].iter().copied()
    }

    pub fn channel_count(&self) -> usize {
        self.targets.iter().map(BTreeSet::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(count: usize) -> InterconnectionGraph {
        let mut edges = Vec::new();
        for i in 0..count {
            edges.push((i, i));
            if i + 1 < count {
                edges.push((i, i + 1));
                edges.push((i + 1, i));
            }
        }
        InterconnectionGraph::from_edges(count, edges)
    }

    #[test]
    fn chain_reaches_two_hops() {
        let t = build_channels(&chain(7), 1).unwrap();
        assert_eq!(t.targets(3).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
        assert_eq!(t.targets(0).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn saturated_radius_is_complete() {
        let t = build_channels(&chain(5), 4).unwrap();
        assert_eq!(t.channel_count(), 25);
    }

    #[test]
    fn components_stay_disconnected() {
        let g = InterconnectionGraph::from_edges(4, [(0, 0), (1, 0), (0, 1), (2, 2), (3, 2), (2, 3)]);
        let t = build_channels(&g, 3).unwrap();
        assert!(t.allows(0, 1) && t.allows(3, 2));
        assert!(!t.allows(0, 2) && !t.allows(1, 3));
    }
}
