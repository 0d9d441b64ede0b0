use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use super::Network;
use crate::error::Result;
use crate::model::{InterconnectionGraph, SystemModel};
use crate::Scalar;

/// A model block an agent looked at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ModelBlock {
    A(usize, usize),
    B(usize, usize),
}

/// Everything one agent read from the model and the measured state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessLog {
    pub agent: usize,
    pub model_reads: BTreeSet<ModelBlock>,
    /// Subsystems whose measured state the agent used.
    pub x0_reads: BTreeSet<usize>,
}

impl AccessLog {
    pub fn new(agent: usize) -> Self {
        Self { agent, ..Self::default() }
    }

    pub fn record_x0(&mut self, subsystem: usize) {
        self.x0_reads.insert(subsystem);
    }
}

/// Model access that records every block it hands out.
pub struct ModelReader<'a, T: Scalar> {
    model: &'a SystemModel<T>,
    log: &'a mut AccessLog,
}

impl<'a, T: Scalar> ModelReader<'a, T> {
    pub fn new(model: &'a SystemModel<T>, log: &'a mut AccessLog) -> Self {
        Self { model, log }
    }

    pub fn a_block(&mut self, i: usize, j: usize) -> &'a DMatrix<T> {
        self.log.model_reads.insert(ModelBlock::A(i, j));
        self.model.a_block(i, j)
    }

    pub fn b_block(&mut self, i: usize, j: usize) -> &'a DMatrix<T> {
        self.log.model_reads.insert(ModelBlock::B(i, j));
        self.model.b_block(i, j)
    }

    /// Whether `[B]_(i,j)` is structurally nonzero. The sparsity pattern is
    /// topology and is not logged.
    pub fn input_coupled(&self, i: usize, j: usize) -> bool {
        self.model.b_block(i, j).iter().any(|v| *v != T::zero())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentTotals {
    pub agent: usize,
    pub msgs_sent: usize,
    pub bytes_sent: usize,
    pub model_blocks_read: usize,
    pub x0_reads: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub radius: usize,
    pub passed: bool,
    pub violations: Vec<String>,
    pub agents: Vec<AgentTotals>,
}

/// Checks that agent `i` only touched model blocks and states of subsystems
/// within `d + 1` hops of `i` (either direction) and only used channels to
/// such agents.
pub fn audit(logs: &[AccessLog], network: &Network, graph: &InterconnectionGraph, d: usize) -> Result<AuditReport> {
    let count = graph.count();
    let mut reach = Vec::with_capacity(count);
    for i in 0..count {
        let mut s: BTreeSet<usize> = graph.d_incoming(i, d + 1)?.into_iter().collect();
        s.extend(graph.d_outgoing(i, d + 1)?);
        reach.push(s);
    }
    let mut violations = Vec::new();
    for log in logs {
        let ok = &reach[log.agent];
        for block in &log.model_reads {
            let (j, k, name) = match *block {
                ModelBlock::A(j, k) => (j, k, "A"),
                ModelBlock::B(j, k) => (j, k, "B"),
            };
            if !ok.contains(&j) || !ok.contains(&k) {
                violations.push(format!("agent {} read [{name}]_({j},{k}) outside its {}-hop neighborhood", log.agent, d + 1));
            }
        }
        for &j in &log.x0_reads {
            if !ok.contains(&j) {
                violations.push(format!("agent {} read the state of subsystem {j} outside its {}-hop neighborhood", log.agent, d + 1));
            }
        }
    }
    for (from, to) in network.channels_used() {
        if !reach[from].contains(&to) {
            violations.push(format!("agent {from} sent to agent {to} outside its {}-hop neighborhood", d + 1));
        }
    }
    let totals = network.totals();
    let agents = logs
        .iter()
        .map(|log| AgentTotals {
            agent: log.agent,
            msgs_sent: totals.get(log.agent).map_or(0, |t| t.0),
            bytes_sent: totals.get(log.agent).map_or(0, |t| t.1),
            model_blocks_read: log.model_reads.len(),
            x0_reads: log.x0_reads.len(),
        })
        .collect();
    Ok(AuditReport { radius: d, passed: violations.is_empty(), violations, agents })
}

/// Message CSV: `agent,round,msgs_sent,bytes_sent,model_blocks_read`.
pub fn write_message_csv<W: Write>(out: W, network: &Network, logs: &[AccessLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["agent", "round", "msgs_sent", "bytes_sent", "model_blocks_read"])?;
    let reads: Vec<usize> = {
        let mut v = vec![0; network.topology().count()];
        for log in logs {
            v[log.agent] = log.model_reads.len();
        }
        v
    };
    for t in network.traffic() {
        w.write_record([
            t.agent.to_string(),
            t.round.seq.to_string(),
            t.msgs_sent.to_string(),
            t.bytes_sent.to_string(),
            reads[t.agent].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::build_channels;
    use crate::model::{build_benchmark_chain, build_interconnection_graph};

    #[test]
    fn far_read_is_flagged() {
        let m = build_benchmark_chain::<f64>(8).unwrap();
        let g = build_interconnection_graph(&m, 0.0);
        let net = Network::new(build_channels(&g, 1).unwrap(), None);
        let mut log = AccessLog::new(0);
        {
            let mut r = ModelReader::new(&m, &mut log);
            r.a_block(1, 2);
            r.b_block(0, 0);
        }
        assert!(audit(std::slice::from_ref(&log), &net, &g, 1).unwrap().passed);
        ModelReader::new(&m, &mut log).a_block(5, 6);
        let report = audit(&[log], &net, &g, 1).unwrap();
        assert!(!report.passed);
        assert!(report.violations[0].contains("[A]_(5,6)"));
    }

    #[test]
    fn saturated_radius_passes() {
        let m = build_benchmark_chain::<f64>(4).unwrap();
        let g = build_interconnection_graph(&m, 0.0);
        let net = Network::new(build_channels(&g, 3).unwrap(), None);
        let mut log = AccessLog::new(0);
        ModelReader::new(&m, &mut log).a_block(3, 3);
        log.record_x0(3);
        assert!(audit(&[log], &net, &g, 3).unwrap().passed);
    }
}
