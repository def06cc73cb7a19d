//! Seed-driven simulation of a transducer network.
//!
//! Every machine starts with its share of the input un-ingested. Its first
//! step (the start) is a scheduler decision like any other and may batch in
//! any subset of the messages already waiting for it. After that a step
//! delivers a nonempty subset of the machine's pending messages, or nothing
//! when the machine still has local work to do.

mod explore;
mod partition;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use explore::{enumerate_schedules, Exploration, DEFAULT_STATE_BOUND};
pub use partition::{enumerate_partitionings, machine_names, PartitionError, Partitioning};

use crate::relspace::{Database, Fact};
use crate::transducer::{MachineState, Transducer, TransducerError};

pub const OUTCOME_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Transducer(#[from] TransducerError),
    #[error("input fact {fact} rejected: {reason}")]
    BadInput { fact: String, reason: String },
    #[error("schedule decision {index}: {reason}")]
    BadDecision { index: usize, reason: String },
}

/// A fact in flight, identified by sender and content.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Message {
    pub from: String,
    pub fact: Fact,
}

/// One scheduler choice: which machine steps and which of its pending
/// messages it ingests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub machine: String,
    pub deliver: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Seed(u64),
    Explicit(Vec<Decision>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Maximum number of machine steps.
    pub step_budget: usize,
    /// Re-enqueue a random already-delivered message after every N
    /// deliveries. Seeded schedules only.
    pub duplicate_every: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { step_budget: 10_000, duplicate_every: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub from: String,
    pub to: String,
    pub fact: Fact,
    /// Iteration of the sender that produced the message.
    pub iteration: u64,
}

#[derive(Debug, Clone)]
struct Node {
    state: MachineState,
    started: bool,
    local_input: Vec<Fact>,
    pending: Vec<Message>,
}

impl Node {
    fn enabled(&self) -> bool {
        !self.started || !self.pending.is_empty() || self.state.needs_tick()
    }
}

/// Machines, their pending inboxes and the trace so far.
#[derive(Debug, Clone)]
pub struct NetworkState {
    transducer: Transducer,
    addrs: Vec<String>,
    nodes: Vec<Node>,
    trace: Vec<TraceEntry>,
}

/// Sets up machines with `id`, `all` and their share of the input. No step
/// is taken.
pub fn init_network(transducer: &Transducer, input: &Database, part: &Partitioning) -> Result<NetworkState, NetError> {
    part.check_covers(input)?;
    for f in input.facts() {
        transducer
            .program()
            .check_input_fact(&f)
            .map_err(|reason| NetError::BadInput { fact: f.to_string(), reason })?;
    }
    let addrs = part.machines().to_vec();
    let nodes = (0..addrs.len())
        .map(|i| {
            Ok(Node {
                state: MachineState::new(transducer.clone(), &addrs[i], &addrs)?,
                started: false,
                local_input: part.local(i),
                pending: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>, TransducerError>>()?;
    Ok(NetworkState { transducer: transducer.clone(), addrs, nodes, trace: Vec::new() })
}

impl NetworkState {
    pub fn transducer(&self) -> &Transducer {
        &self.transducer
    }

    pub fn machines(&self) -> &[String] {
        &self.addrs
    }

    pub fn machine(&self, addr: &str) -> Option<&MachineState> {
        self.index(addr).map(|i| &self.nodes[i].state)
    }

    /// Facts assigned to `addr` and not yet ingested.
    pub fn local_input(&self, addr: &str) -> Option<&[Fact]> {
        self.index(addr).map(|i| self.nodes[i].local_input.as_slice())
    }

    pub fn pending(&self, addr: &str) -> Option<&[Message]> {
        self.index(addr).map(|i| self.nodes[i].pending.as_slice())
    }

    pub fn is_quiescent(&self) -> bool {
        self.nodes.iter().all(|n| !n.enabled())
    }

    fn index(&self, addr: &str) -> Option<usize> {
        self.addrs.iter().position(|a| a == addr)
    }

    pub fn union_output(&self) -> Database {
        let mut out = Database::new();
        for n in &self.nodes {
            out = out.union(n.state.output()).expect("machines share one schema");
        }
        out
    }

    /// Steps machine `idx` with the given pending messages (by position).
    /// Returns the number of inter-machine messages delivered.
    fn apply(&mut self, idx: usize, picks: &[usize]) -> Result<usize, TransducerError> {
        let node = &mut self.nodes[idx];
        let mut picks = picks.to_vec();
        picks.sort_unstable();
        picks.dedup();
        let mut delivered = Vec::with_capacity(picks.len());
        for &p in picks.iter().rev() {
            delivered.push(node.pending.remove(p));
        }
        delivered.reverse();
        let mut inbox: Vec<Fact> = if node.started { Vec::new() } else { std::mem::take(&mut node.local_input) };
        inbox.extend(delivered.iter().map(|m| m.fact.clone()));
        let result = node.state.step(&inbox)?;
        let iteration = node.state.iteration;
        node.state = result.new_state;
        node.started = true;
        let me = self.addrs[idx].clone();
        for (dest, facts) in result.outbound {
            let d = self.index(&dest).expect("transducer checks destinations");
            for fact in facts {
                self.trace.push(TraceEntry { from: me.clone(), to: dest.clone(), fact: fact.clone(), iteration });
                self.nodes[d].pending.push(Message { from: me.clone(), fact });
            }
        }
        Ok(delivered.iter().filter(|m| m.from != me).count())
    }
}

/// Result of running one schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunOutcome {
    pub schema_version: u32,
    pub quiesced: bool,
    pub steps: usize,
    pub outputs: BTreeMap<String, Database>,
    pub union_output: Database,
    /// Inter-machine messages delivered over the whole run.
    pub messages_delivered: usize,
    /// Inter-machine messages delivered up to the last step that changed
    /// the union output.
    pub messages_before_output: usize,
    pub trace: Vec<TraceEntry>,
    /// Replays this run as an explicit schedule.
    pub schedule: Vec<Decision>,
}

impl RunOutcome {
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("outcome serializes")
    }

    /// One JSON object per trace entry.
    pub fn trace_jsonl(&self) -> String {
        self.trace.iter().map(|t| serde_json::to_string(t).expect("trace serializes") + "\n").collect()
    }
}

/// Runs `s` from `n` until quiescence, the end of an explicit schedule, or
/// the step budget.
pub fn run_schedule(n: &NetworkState, s: &Schedule, opts: RunOptions) -> Result<RunOutcome, NetError> {
    let mut run = Run {
        union: n.union_output(),
        net: n.clone(),
        steps: 0,
        delivered: 0,
        before_output: 0,
        decisions: Vec::new(),
        history: Vec::new(),
    };

    match s {
        Schedule::Seed(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut next_dup = opts.duplicate_every;
            while !run.net.is_quiescent() && run.steps < opts.step_budget {
                let enabled: Vec<usize> = (0..run.net.nodes.len()).filter(|&i| run.net.nodes[i].enabled()).collect();
                let idx = enabled[rng.gen_range(0..enabled.len())];
                let node = &run.net.nodes[idx];
                let mut picks: Vec<usize> = (0..node.pending.len()).filter(|_| rng.gen_bool(0.5)).collect();
                if node.started && picks.is_empty() && !node.state.needs_tick() {
                    picks.push(rng.gen_range(0..node.pending.len()));
                }
                run.record(idx, &picks)?;
                if let (Some(every), Some(at)) = (opts.duplicate_every, next_dup) {
                    if run.history.len() >= at {
                        let (to, msg) = run.history[rng.gen_range(0..run.history.len())].clone();
                        run.net.nodes[to].pending.push(msg);
                        next_dup = Some(at + every.max(1));
                    }
                }
            }
        }
        Schedule::Explicit(list) => {
            for (i, d) in list.iter().enumerate() {
                if run.steps >= opts.step_budget {
                    break;
                }
                let bad = |reason: String| NetError::BadDecision { index: i, reason };
                let net = &run.net;
                let idx = net.index(&d.machine).ok_or_else(|| bad(format!("unknown machine `{}`", d.machine)))?;
                let mut taken: Vec<usize> = Vec::new();
                for m in &d.deliver {
                    let pos = net.nodes[idx]
                        .pending
                        .iter()
                        .enumerate()
                        .position(|(j, p)| p == m && !taken.contains(&j))
                        .ok_or_else(|| bad(format!("{} from {} is not pending at {}", m.fact, m.from, d.machine)))?;
                    taken.push(pos);
                }
                let node = &net.nodes[idx];
                if node.started && taken.is_empty() && !node.state.needs_tick() {
                    return Err(bad(format!("{} has nothing to do", d.machine)));
                }
                run.record(idx, &taken)?;
            }
        }
    }

    let net = run.net;
    let outputs = net.addrs.iter().cloned().zip(net.nodes.iter().map(|n| n.state.output().clone())).collect();
    Ok(RunOutcome {
        schema_version: OUTCOME_SCHEMA_VERSION,
        quiesced: net.is_quiescent(),
        steps: run.steps,
        outputs,
        union_output: run.union,
        messages_delivered: run.delivered,
        messages_before_output: run.before_output,
        trace: net.trace,
        schedule: run.decisions,
    })
}

struct Run {
    net: NetworkState,
    steps: usize,
    delivered: usize,
    before_output: usize,
    union: Database,
    decisions: Vec<Decision>,
    /// Distinct inter-machine messages delivered so far, by destination.
    history: Vec<(usize, Message)>,
}

impl Run {
    fn record(&mut self, idx: usize, picks: &[usize]) -> Result<(), NetError> {
        let me = self.net.addrs[idx].clone();
        let deliver: Vec<Message> = picks.iter().map(|&p| self.net.nodes[idx].pending[p].clone()).collect();
        for m in deliver.iter().filter(|m| m.from != me) {
            if !self.history.contains(&(idx, m.clone())) {
                self.history.push((idx, m.clone()));
            }
        }
        self.decisions.push(Decision { machine: me, deliver });
        self.delivered += self.net.apply(idx, picks)?;
        self.steps += 1;
        let now = self.net.union_output();
        if now != self.union {
            self.union = now;
            self.before_output = self.delivered;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calmlang::{parse_program, validate_program};
    use crate::relspace::parse_facts;

    fn transducer(src: &str) -> Transducer {
        Transducer::new(validate_program(parse_program(src).unwrap()).unwrap()).unwrap()
    }

    fn input(src: &str) -> Database {
        Database::from_facts(parse_facts(src).unwrap()).unwrap()
    }

    const SHARE: &str = "input table w(sym, sym). channel s(addr, sym, sym). output table e(sym, sym).
        e(X, Y) :- w(X, Y). s(*, X, Y) :- w(X, Y). e(X, Y) :- s(_, X, Y).";

    #[test]
    fn init_places_input_and_membership() {
        let t = transducer(SHARE);
        let db = input("w(a, b). w(b, c).");
        let net = init_network(&t, &db, &Partitioning::colocated(&db, 3, 0).unwrap()).unwrap();
        assert_eq!(net.machines(), ["m1", "m2", "m3"]);
        assert_eq!(net.local_input("m1").unwrap().len(), 2);
        let m2 = net.machine("m2").unwrap();
        assert_eq!(m2.persisted.relation("all").unwrap().len(), 3);
        assert!(m2.persisted.contains(&"id(@m2)".parse().unwrap()));
        assert!(!net.is_quiescent());
    }

    #[test]
    fn empty_input_three_machines() {
        let t = transducer(SHARE);
        let net =
            init_network(&t, &Database::new(), &Partitioning::colocated(&Database::new(), 3, 0).unwrap()).unwrap();
        let out = run_schedule(&net, &Schedule::Seed(1), RunOptions::default()).unwrap();
        assert!(out.quiesced);
        assert_eq!(out.steps, 3);
        assert!(out.union_output.is_empty());
    }

    #[test]
    fn seeded_run_replays_as_explicit_schedule() {
        let t = transducer(SHARE);
        let db = input("w(a, b). w(b, c). w(c, a).");
        let net = init_network(&t, &db, &Partitioning::hash(&db, 3).unwrap()).unwrap();
        let a = run_schedule(&net, &Schedule::Seed(9), RunOptions::default()).unwrap();
        assert!(a.quiesced);
        assert_eq!(a.union_output.len(), 3);
        let b = run_schedule(&net, &Schedule::Explicit(a.schedule.clone()), RunOptions::default()).unwrap();
        assert_eq!(a.canonical_json(), b.canonical_json());
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let t = transducer(SHARE);
        let db = input("w(a, b).");
        let net = init_network(&t, &db, &Partitioning::colocated(&db, 2, 0).unwrap()).unwrap();
        let out = run_schedule(&net, &Schedule::Seed(0), RunOptions { step_budget: 1, duplicate_every: None }).unwrap();
        assert!(!out.quiesced);
        assert_eq!(out.steps, 1);
    }

    #[test]
    fn duplicated_messages_are_harmless_for_idempotent_programs() {
        let t = transducer(SHARE);
        let db = input("w(a, b). w(b, c). w(c, d).");
        let net = init_network(&t, &db, &Partitioning::hash(&db, 3).unwrap()).unwrap();
        let plain = run_schedule(&net, &Schedule::Seed(3), RunOptions::default()).unwrap();
        let dup = run_schedule(&net, &Schedule::Seed(3), RunOptions { step_budget: 10_000, duplicate_every: Some(1) })
            .unwrap();
        assert!(dup.quiesced);
        assert_eq!(plain.union_output, dup.union_output);
    }

    #[test]
    fn bad_explicit_decisions_are_rejected() {
        let t = transducer(SHARE);
        let db = input("w(a, b).");
        let net = init_network(&t, &db, &Partitioning::colocated(&db, 2, 0).unwrap()).unwrap();
        let ghost = Decision {
            machine: "m2".into(),
            deliver: vec![Message { from: "m1".into(), fact: "s(@m2, a, b)".parse().unwrap() }],
        };
        assert!(matches!(
            run_schedule(&net, &Schedule::Explicit(vec![ghost]), RunOptions::default()),
            Err(NetError::BadDecision { index: 0, .. })
        ));
    }

    #[test]
    fn trace_lines_are_json() {
        let t = transducer(SHARE);
        let db = input("w(a, b).");
        let net = init_network(&t, &db, &Partitioning::colocated(&db, 2, 0).unwrap()).unwrap();
        let out = run_schedule(&net, &Schedule::Seed(4), RunOptions::default()).unwrap();
        assert_eq!(out.trace_jsonl(), "{\"from\":\"m1\",\"to\":\"m2\",\"fact\":\"s(@m2, a, b)\",\"iteration\":0}\n");
    }
}
