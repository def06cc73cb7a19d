//! Exhaustive depth-first exploration of delivery choices.

use std::collections::{BTreeMap, HashMap};

use super::{run_schedule, Decision, Message, NetError, NetworkState, RunOptions, RunOutcome, Schedule};
use crate::relspace::{Database, Fact};
use crate::transducer::MachineState;

pub const DEFAULT_STATE_BOUND: usize = 1_000_000;

/// Largest pending inbox whose subsets are enumerated.
const MAX_INBOX: usize = 20;

#[derive(Debug, Clone)]
pub struct Exploration {
    /// One replayed run per distinct quiescent union output, in canonical
    /// output order.
    pub outcomes: Vec<RunOutcome>,
    /// Quiescent global states reached.
    pub quiescent_states: usize,
    pub states_explored: usize,
    /// False when the state bound stopped the search early.
    pub complete: bool,
}

type NodeKey = (u32, bool, Vec<u32>);

#[derive(Default)]
struct Interner {
    states: Vec<MachineState>,
    state_ids: HashMap<MachineState, u32>,
    messages: Vec<(usize, Message)>,
    message_ids: HashMap<(usize, Message), u32>,
    steps: HashMap<NodeKey, (u32, Vec<(usize, u32)>)>,
}

impl Interner {
    fn state(&mut self, s: MachineState) -> u32 {
        if let Some(&id) = self.state_ids.get(&s) {
            return id;
        }
        let id = self.states.len() as u32;
        self.state_ids.insert(s.clone(), id);
        self.states.push(s);
        id
    }

    fn message(&mut self, to: usize, m: Message) -> u32 {
        let key = (to, m);
        if let Some(&id) = self.message_ids.get(&key) {
            return id;
        }
        let id = self.messages.len() as u32;
        self.message_ids.insert(key.clone(), id);
        self.messages.push(key);
        id
    }
}

/// Explores every reachable delivery choice from `n`, deduplicating global
/// states, and stops after `bound` distinct states.
pub fn enumerate_schedules(n: &NetworkState, bound: usize) -> Result<Exploration, NetError> {
    let mut it = Interner::default();
    let addrs = n.addrs.clone();
    let local: Vec<Vec<Fact>> = n.nodes.iter().map(|x| x.local_input.clone()).collect();

    let mut root: Vec<NodeKey> = Vec::new();
    for (i, node) in n.nodes.iter().enumerate() {
        let sid = it.state(node.state.clone());
        let mut pending: Vec<u32> = node.pending.iter().map(|m| it.message(i, m.clone())).collect();
        pending.sort_unstable();
        root.push((sid, node.started, pending));
    }

    let mut visited: HashMap<Vec<NodeKey>, u32> = HashMap::new();
    let mut parents: Vec<Option<(u32, usize, Vec<u32>)>> = Vec::new();
    visited.insert(root.clone(), 0);
    parents.push(None);
    let mut stack = vec![(root, 0u32)];
    let mut terminals: BTreeMap<String, u32> = BTreeMap::new();
    let mut quiescent_states = 0usize;
    let mut complete = true;

    'search: while let Some((g, gid)) = stack.pop() {
        let mut any = false;
        for (i, (sid, started, pending)) in g.iter().enumerate() {
            let needs_tick = it.states[*sid as usize].needs_tick();
            if *started && pending.is_empty() && !needs_tick {
                continue;
            }
            any = true;
            if pending.len() > MAX_INBOX {
                complete = false;
                continue;
            }
            for mask in 0u32..(1u32 << pending.len()) {
                if *started && mask == 0 && !needs_tick {
                    continue;
                }
                let picks: Vec<u32> =
                    pending.iter().enumerate().filter(|(b, _)| mask & (1 << b) != 0).map(|(_, &m)| m).collect();
                let key: NodeKey = (*sid, *started, picks.clone());
                let (new_sid, sends) = match it.steps.get(&key) {
                    Some(v) => v.clone(),
                    None => {
                        let state = it.states[*sid as usize].clone();
                        let mut inbox = if *started { Vec::new() } else { local[i].clone() };
                        inbox.extend(picks.iter().map(|&m| it.messages[m as usize].1.fact.clone()));
                        let r = state.step(&inbox)?;
                        let new_sid = it.state(r.new_state);
                        let mut sends = Vec::new();
                        for (dest, facts) in r.outbound {
                            let d = addrs.iter().position(|a| *a == dest).expect("known destination");
                            for fact in facts {
                                sends.push((d, it.message(d, Message { from: addrs[i].clone(), fact })));
                            }
                        }
                        it.steps.insert(key, (new_sid, sends.clone()));
                        (new_sid, sends)
                    }
                };
                let mut next = g.clone();
                next[i].0 = new_sid;
                next[i].1 = true;
                next[i].2.retain(|m| !picks.contains(m));
                for (d, m) in sends {
                    next[d].2.push(m);
                }
                for node in next.iter_mut() {
                    node.2.sort_unstable();
                }
                if visited.contains_key(&next) {
                    continue;
                }
                if visited.len() >= bound {
                    complete = false;
                    break 'search;
                }
                let id = parents.len() as u32;
                visited.insert(next.clone(), id);
                parents.push(Some((gid, i, picks)));
                stack.push((next, id));
            }
        }
        if !any {
            quiescent_states += 1;
            let mut union = Database::new();
            for (sid, _, _) in &g {
                union = union.union(it.states[*sid as usize].output()).expect("machines share one schema");
            }
            terminals.entry(union.canonical_json()).or_insert(gid);
        }
    }

    let opts = RunOptions { step_budget: usize::MAX, duplicate_every: None };
    let mut outcomes = Vec::new();
    for (_, gid) in terminals {
        let mut decisions = Vec::new();
        let mut cur = gid;
        while let Some((parent, machine, picks)) = &parents[cur as usize] {
            decisions.push(Decision {
                machine: addrs[*machine].clone(),
                deliver: picks.iter().map(|&m| it.messages[m as usize].1.clone()).collect(),
            });
            cur = *parent;
        }
        decisions.reverse();
        outcomes.push(run_schedule(n, &Schedule::Explicit(decisions), opts)?);
    }
    Ok(Exploration { outcomes, quiescent_states, states_explored: visited.len(), complete })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calmlang::{parse_program, validate_program};
    use crate::netsim::{init_network, Partitioning};
    use crate::relspace::parse_facts;
    use crate::transducer::Transducer;

    fn setup(src: &str, facts: &str, part: impl Fn(&Database) -> Partitioning) -> NetworkState {
        let t = Transducer::new(validate_program(parse_program(src).unwrap()).unwrap()).unwrap();
        let db = Database::from_facts(parse_facts(facts).unwrap()).unwrap();
        init_network(&t, &db, &part(&db)).unwrap()
    }

    const SHARE: &str = "input table w(sym, sym). channel s(addr, sym, sym). output table e(sym, sym).
        e(X, Y) :- w(X, Y). s(*, X, Y) :- w(X, Y). e(X, Y) :- s(_, X, Y).";

    #[test]
    fn single_machine_has_one_outcome() {
        let net = setup(SHARE, "w(a, b). w(b, c).", |db| Partitioning::colocated(db, 1, 0).unwrap());
        let ex = enumerate_schedules(&net, DEFAULT_STATE_BOUND).unwrap();
        assert!(ex.complete);
        assert_eq!(ex.outcomes.len(), 1);
        assert_eq!(ex.states_explored, 2);
    }

    #[test]
    fn monotone_split_agrees() {
        let net = setup(SHARE, "w(a, b). w(b, c). w(c, a).", |db| Partitioning::hash(db, 3).unwrap());
        let ex = enumerate_schedules(&net, DEFAULT_STATE_BOUND).unwrap();
        assert!(ex.complete);
        assert_eq!(ex.outcomes.len(), 1);
        assert!(ex.outcomes[0].quiesced);
        assert!(ex.quiescent_states >= 1);
    }

    #[test]
    fn bound_marks_partial_results() {
        let net = setup(SHARE, "w(a, b). w(b, c). w(c, a).", |db| Partitioning::hash(db, 3).unwrap());
        let ex = enumerate_schedules(&net, 3).unwrap();
        assert!(!ex.complete);
        assert_eq!(ex.states_explored, 3);
    }

    #[test]
    fn order_sensitive_program_has_two_outcomes() {
        let src = "input table go(sym). channel c(addr, sym). table got(sym). output table first(sym).
            c(*, X) :- go(X). got(X) :- c(_, X). got(X) :- go(X).
            first(X) :- got(X), !got(b), X = a.";
        let net = setup(src, "go(a). go(b).", |db| {
            let f: Vec<Fact> = db.facts().collect();
            let placement =
                BTreeMap::from([("m1".to_string(), vec![f[0].clone()]), ("m2".to_string(), vec![f[1].clone()])]);
            Partitioning::explicit(db, 2, &placement).unwrap()
        });
        let ex = enumerate_schedules(&net, DEFAULT_STATE_BOUND).unwrap();
        assert_eq!(ex.outcomes.len(), 2);
    }
}
