use std::collections::{BTreeMap, BTreeSet};

use super::{ChannelTopology, Message, PayloadKind, RoundId};
use crate::error::{Error, Result};
use crate::sls::{HorizonSpec, PartitionSets, RowKind};
use crate::model::SubsystemPartition;
use crate::Scalar;

/// Which subsystem owns each row and column of `Phi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ownership {
    row_owner: Vec<usize>,
    col_owner: Vec<usize>,
}

impl Ownership {
    pub fn new(sets: &PartitionSets, h: &HorizonSpec) -> Self {
        let mut row_owner = vec![usize::MAX; h.rows()];
        for (i, rows) in sets.rows.iter().enumerate() {
            for &r in rows {
                row_owner[r] = i;
            }
        }
        let mut col_owner = vec![usize::MAX; h.n()];
        for (i, cols) in sets.cols.iter().enumerate() {
            for &c in cols {
                col_owner[c] = i;
            }
        }
        Self { row_owner, col_owner }
    }

    pub fn from_partition(partition: &SubsystemPartition, h: &HorizonSpec) -> Self {
        let row_owner = (0..h.rows())
            .map(|r| match h.row_kind(r) {
                RowKind::State { index, .. } => partition.state_owner(index),
                RowKind::Input { index, .. } => partition.input_owner(index),
            })
            .collect();
        let col_owner = (0..h.n()).map(|c| partition.state_owner(c)).collect();
        Self { row_owner, col_owner }
    }

    pub fn row_owner(&self, r: usize) -> Option<usize> {
        self.row_owner.get(r).copied()
    }

    pub fn col_owner(&self, c: usize) -> Option<usize> {
        self.col_owner.get(c).copied()
    }
}

/// Messages and bytes one agent sent in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Traffic {
    pub agent: usize,
    pub round: RoundId,
    pub msgs_sent: usize,
    pub bytes_sent: usize,
}

/// In-process transport with barrier delivery. Every message is checked
/// against the channel topology, round ordering, duplicates and, when
/// ownership is known, the sender's right to the payload.
#[derive(Debug, Clone)]
pub struct Network {
    topology: ChannelTopology,
    ownership: Option<Ownership>,
    last_seq: Option<u64>,
    traffic: Vec<Traffic>,
    channels_used: BTreeSet<(usize, usize)>,
}

impl Network {
    pub fn new(topology: ChannelTopology, ownership: Option<Ownership>) -> Self {
        Self { topology, ownership, last_seq: None, traffic: Vec::new(), channels_used: BTreeSet::new() }
    }

    pub fn topology(&self) -> &ChannelTopology {
        &self.topology
    }

    /// Sequence number for the next round.
    pub fn next_seq(&self) -> u64 {
        self.last_seq.map_or(0, |s| s + 1)
    }

    pub fn traffic(&self) -> &[Traffic] {
        &self.traffic
    }

    pub fn channels_used(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.channels_used.iter().copied()
    }

    /// Total messages and bytes sent by each agent.
    pub fn totals(&self) -> Vec<(usize, usize)> {
        let mut out = vec![(0, 0); self.topology.count()];
        for t in &self.traffic {
            out[t.agent].0 += t.msgs_sent;
            out[t.agent].1 += t.bytes_sent;
        }
        out
    }

    /// Delivers one round. Inboxes are indexed by receiver and sorted by sender.
    pub fn exchange<T: Scalar>(&mut self, round: RoundId, outbox: Vec<Message<T>>) -> Result<Vec<Vec<Message<T>>>> {
        if self.last_seq.is_some_and(|s| round.seq <= s) {
            return Err(Error::Protocol(format!("round {round} is not after round #{}", self.last_seq.unwrap_or(0))));
        }
        let count = self.topology.count();
        let mut seen = BTreeSet::new();
        let mut per_agent: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for m in &outbox {
            if m.round != round {
                return Err(Error::Protocol(format!("message tagged {} sent in round {round}", m.round)));
            }
            if m.sender >= count || m.receiver >= count {
                return Err(Error::Protocol(format!("message {} -> {} names an unknown agent", m.sender, m.receiver)));
            }
            if !self.topology.allows(m.sender, m.receiver) {
                return Err(Error::Protocol(format!(
                    "channel {} -> {} is outside the {}-local topology in round {round}",
                    m.sender,
                    m.receiver,
                    self.topology.radius()
                )));
            }
            if !seen.insert((m.sender, m.receiver)) {
                return Err(Error::Protocol(format!(
                    "duplicate {} payload on channel {} -> {} in round {round}",
                    round.kind, m.sender, m.receiver
                )));
            }
            let p = &m.payload;
            let value_shape = match round.kind {
                PayloadKind::StateMeasurement => (1, p.cols.len()),
                PayloadKind::PhiRows | PayloadKind::PsiCols => (p.rows.len(), p.cols.len()),
                PayloadKind::XCopy | PayloadKind::ZValue => (p.rows.len(), 1),
            };
            if p.values.shape() != value_shape {
                return Err(Error::Protocol(format!(
                    "{} payload {} -> {} has values {:?}, indices imply {:?}",
                    round.kind,
                    m.sender,
                    m.receiver,
                    p.values.shape(),
                    value_shape
                )));
            }
            if let Some(own) = &self.ownership {
                check_ownership(own, m)?;
            }
            let e = per_agent.entry(m.sender).or_default();
            e.0 += 1;
            e.1 += p.bytes();
        }
        self.last_seq = Some(round.seq);
        for (agent, (msgs_sent, bytes_sent)) in per_agent {
            self.traffic.push(Traffic { agent, round, msgs_sent, bytes_sent });
        }
        let mut inboxes: Vec<Vec<Message<T>>> = (0..count).map(|_| Vec::new()).collect();
        for m in outbox {
            self.channels_used.insert((m.sender, m.receiver));
            inboxes[m.receiver].push(m);
        }
        for inbox in &mut inboxes {
            inbox.sort_by_key(|m| m.sender);
        }
        Ok(inboxes)
    }
}

impl Network {
    /// Records a message as delivered without any check, for fault injection.
    pub fn deliver_unchecked<T: Scalar>(&mut self, m: &Message<T>) {
        self.last_seq = Some(self.last_seq.map_or(m.round.seq, |s| s.max(m.round.seq)));
        self.traffic.push(Traffic { agent: m.sender, round: m.round, msgs_sent: 1, bytes_sent: m.payload.bytes() });
        self.channels_used.insert((m.sender, m.receiver));
    }
}

fn check_ownership<T: Scalar>(own: &Ownership, m: &Message<T>) -> Result<()> {
    let p = &m.payload;
    let bad = |what: &str| {
        Err(Error::Protocol(format!(
            "{} payload {} -> {} in round {} carries {what} the sender may not send",
            m.round.kind, m.sender, m.receiver, m.round
        )))
    };
    let rows_of = |who: usize| p.rows.iter().all(|&r| own.row_owner(r) == Some(who));
    let cols_of = |who: usize| p.cols.iter().all(|&c| own.col_owner(c) == Some(who));
    match m.round.kind {
        PayloadKind::StateMeasurement | PayloadKind::PsiCols if !cols_of(m.sender) => bad("columns"),
        PayloadKind::PhiRows | PayloadKind::ZValue if !rows_of(m.sender) => bad("rows"),
        PayloadKind::XCopy if !rows_of(m.receiver) => bad("rows"),
        _ => Ok(()),
    }
}
