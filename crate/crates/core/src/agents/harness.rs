use std::collections::BTreeMap;
use std::time::Duration;

use rayon::prelude::*;

use super::{Message, Network, PayloadKind, RoundId};
use crate::error::Result;
use crate::Scalar;

/// How agent computations within one phase are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheduler {
    #[default]
    Sequential,
    /// One rayon task per agent.
    Parallel,
}

/// CPU time consumed by the calling thread, so that preemption by other
/// threads does not count as agent compute time.
#[cfg(unix)]
fn thread_cpu_time() -> Duration {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec and the clock id is a constant.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return Duration::ZERO;
    }
    Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32)
}

#[cfg(not(unix))]
fn thread_cpu_time() -> Duration {
    use std::sync::OnceLock;
    static START: OnceLock<std::time::Instant> = OnceLock::new();
    START.get_or_init(std::time::Instant::now).elapsed()
}

/// Compute time accounting in thread CPU time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timing {
    /// Sum over phases of the slowest agent of that phase, as if all agents
    /// ran concurrently.
    pub parallel: Duration,
    /// Same critical path with each agent's time in a phase replaced by its
    /// median over all phases of the same kind, which removes timer and
    /// interrupt noise from the maximum.
    pub typical: Duration,
    pub per_agent: Vec<Duration>,
    pub phases: usize,
}

/// Per-agent samples of one phase kind, in nanoseconds.
#[derive(Debug, Clone, Default)]
struct PhaseSamples {
    count: usize,
    per_agent: Vec<Vec<u32>>,
}

fn median(v: &mut [u32]) -> u32 {
    if v.is_empty() {
        return 0;
    }
    let mid = v.len() / 2;
    *v.select_nth_unstable(mid).1
}

/// Runs agents phase by phase, with message delivery at the barrier
/// between phases.
pub struct Harness<A, T: Scalar> {
    agents: Vec<A>,
    network: Network,
    scheduler: Scheduler,
    inboxes: Vec<Vec<Message<T>>>,
    timing: Timing,
    samples: BTreeMap<&'static str, PhaseSamples>,
}

impl<A: Send, T: Scalar> Harness<A, T> {
    pub fn new(agents: Vec<A>, network: Network, scheduler: Scheduler) -> Self {
        let count = agents.len();
        Self {
            agents,
            network,
            scheduler,
            inboxes: (0..count).map(|_| Vec::new()).collect(),
            timing: Timing { per_agent: vec![Duration::ZERO; count], ..Timing::default() },
            samples: BTreeMap::new(),
        }
    }

    pub fn agents(&self) -> &[A] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [A] {
        &mut self.agents
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    pub fn scheduler(&self) -> Scheduler {
        self.scheduler
    }

    /// Timing since the last reset, with the median-based critical path filled in.
    pub fn timing(&self) -> Timing {
        let mut t = self.timing.clone();
        let nanos: u64 = self
            .samples
            .values()
            .map(|s| {
                let slowest = s.per_agent.iter().map(|v| median(&mut v.clone())).max().unwrap_or(0);
                s.count as u64 * u64::from(slowest)
            })
            .sum();
        t.typical = Duration::from_nanos(nanos);
        t
    }

    pub fn reset_timing(&mut self) {
        self.timing = Timing { per_agent: vec![Duration::ZERO; self.agents.len()], ..Timing::default() };
        self.samples.clear();
    }

    pub fn round(&self, kind: PayloadKind, step: usize, outer: usize, inner: Option<usize>) -> RoundId {
        RoundId { seq: self.network.next_seq(), step, outer, inner, kind }
    }

    /// Runs `f` on every agent with its pending inbox, timing it under the
    /// phase kind `phase`. The first error in agent order is returned
    /// regardless of the scheduler.
    pub fn run<R, F>(&mut self, phase: &'static str, f: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(&mut A, Vec<Message<T>>) -> Result<R> + Sync,
    {
        let inboxes = std::mem::replace(&mut self.inboxes, (0..self.agents.len()).map(|_| Vec::new()).collect());
        let timed = |(agent, inbox): (&mut A, Vec<Message<T>>)| {
            let start = thread_cpu_time();
            let out = f(agent, inbox);
            (out, thread_cpu_time().saturating_sub(start))
        };
        let results: Vec<(Result<R>, Duration)> = match self.scheduler {
            Scheduler::Sequential => self.agents.iter_mut().zip(inboxes).map(timed).collect(),
            Scheduler::Parallel => self.agents.par_iter_mut().zip(inboxes.into_par_iter()).map(timed).collect(),
        };
        let slowest = results.iter().map(|r| r.1).max().unwrap_or_default();
        self.timing.parallel += slowest;
        self.timing.phases += 1;
        let count = self.agents.len();
        let samples = self.samples.entry(phase).or_insert_with(|| PhaseSamples { count: 0, per_agent: vec![Vec::new(); count] });
        samples.count += 1;
        for (v, r) in samples.per_agent.iter_mut().zip(&results) {
            v.push(u32::try_from(r.1.as_nanos()).unwrap_or(u32::MAX));
        }
        let mut out = Vec::with_capacity(results.len());
        for (k, (r, d)) in results.into_iter().enumerate() {
            self.timing.per_agent[k] += d;
            out.push(r?);
        }
        Ok(out)
    }

    /// Delivers `outbox` through the network; inboxes are read by the next `run`.
    pub fn deliver(&mut self, round: RoundId, outbox: Vec<Message<T>>) -> Result<()> {
        self.inboxes = self.network.exchange(round, outbox)?;
        Ok(())
    }

    /// `run` followed by delivery of all returned messages.
    pub fn communicate<F>(&mut self, round: RoundId, f: F) -> Result<()>
    where
        F: Fn(&mut A, Vec<Message<T>>) -> Result<Vec<Message<T>>> + Sync,
    {
        let outbox = self.run(round.kind.name(), f)?.into_iter().flatten().collect();
        self.deliver(round, outbox)
    }

    pub fn into_parts(self) -> (Vec<A>, Network) {
        (self.agents, self.network)
    }
}
