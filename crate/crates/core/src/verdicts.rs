//! Confluence and coordination verdicts from explored runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::netsim::{
    enumerate_partitionings, enumerate_schedules, init_network, run_schedule, NetError, Partitioning, RunOptions,
    RunOutcome, Schedule, DEFAULT_STATE_BOUND,
};
use crate::relspace::{Database, Fact, RelError};
use crate::transducer::Transducer;

pub const VERDICT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SAMPLES: usize = 64;
pub const DEFAULT_PARTITION_CAP: usize = 27;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Exhaustive,
    Sampled,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exhaustive" => Ok(Mode::Exhaustive),
            "sampled" => Ok(Mode::Sampled),
            other => Err(format!("unknown mode `{other}` (expected exhaustive or sampled)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckOptions {
    pub mode: Mode,
    /// Seeded runs in sampled mode.
    pub samples: usize,
    /// First seed in sampled mode; run `i` uses `seed + i`.
    pub seed: u64,
    /// Distinct scheduler states in exhaustive mode.
    pub state_bound: usize,
    pub run: RunOptions,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            mode: Mode::Exhaustive,
            samples: DEFAULT_SAMPLES,
            seed: 0,
            state_bound: DEFAULT_STATE_BOUND,
            run: RunOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfluenceOutcome {
    ConfluentOnInstance,
    Divergent,
    Inconclusive,
}

impl ConfluenceOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            ConfluenceOutcome::ConfluentOnInstance => "confluent-on-instance",
            ConfluenceOutcome::Divergent => "divergent",
            ConfluenceOutcome::Inconclusive => "inconclusive",
        }
    }
}

/// A run that produced one of the compared outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    /// Seed that produced the run, in sampled mode.
    pub seed: Option<u64>,
    pub schedule: Schedule,
    pub union_output: Database,
}

/// Facts present in only one of two outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Default)]
pub struct OutputDiff {
    pub only_left: Database,
    pub only_right: Database,
}

impl OutputDiff {
    pub fn is_empty(&self) -> bool {
        self.only_left.is_empty() && self.only_right.is_empty()
    }

    pub fn len(&self) -> usize {
        self.only_left.len() + self.only_right.len()
    }

    /// The symmetric difference as one fact list.
    pub fn facts(&self) -> Vec<Fact> {
        let mut all: Vec<Fact> = self.only_left.facts().chain(self.only_right.facts()).collect();
        all.sort();
        all
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfluenceVerdict {
    pub schema_version: u32,
    pub mode: Mode,
    pub outcome: ConfluenceOutcome,
    pub distinct_outcomes: usize,
    pub runs_examined: usize,
    /// False when exhaustive search hit its state bound.
    pub complete: bool,
    pub witnesses: Vec<Witness>,
    pub diff: Option<OutputDiff>,
}

/// Symmetric difference of two union outputs.
pub fn compare_outputs(a: &RunOutcome, b: &RunOutcome) -> Result<OutputDiff, RelError> {
    diff_databases(&a.union_output, &b.union_output)
}

pub fn diff_databases(a: &Database, b: &Database) -> Result<OutputDiff, RelError> {
    a.union(b)?;
    Ok(OutputDiff { only_left: a.difference(b), only_right: b.difference(a) })
}

/// Runs whose union outputs differ. Picks the pair with the smallest
/// symmetric difference.
fn closest_pair(runs: &[(Option<u64>, &RunOutcome)]) -> Result<(usize, usize, OutputDiff), RelError> {
    let mut best: Option<(usize, usize, OutputDiff)> = None;
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            let d = compare_outputs(runs[i].1, runs[j].1)?;
            if !d.is_empty() && best.as_ref().is_none_or(|(_, _, b)| d.len() < b.len()) {
                best = Some((i, j, d));
            }
        }
    }
    Ok(best.expect("at least two distinct outputs"))
}

fn witness(seed: Option<u64>, r: &RunOutcome) -> Witness {
    Witness { seed, schedule: Schedule::Explicit(r.schedule.clone()), union_output: r.union_output.clone() }
}

#[derive(Debug, thiserror::Error)]
pub enum VerdictError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Relation(#[from] RelError),
}

/// Compares quiescent union outputs across schedules for one input and
/// partitioning.
pub fn check_confluence(
    t: &Transducer,
    input: &Database,
    part: &Partitioning,
    opts: CheckOptions,
) -> Result<ConfluenceVerdict, VerdictError> {
    let net = init_network(t, input, part)?;
    let (runs, runs_examined, complete): (Vec<(Option<u64>, RunOutcome)>, usize, bool) = match opts.mode {
        Mode::Exhaustive => {
            let ex = enumerate_schedules(&net, opts.state_bound)?;
            (ex.outcomes.into_iter().map(|o| (None, o)).collect(), ex.quiescent_states, ex.complete)
        }
        Mode::Sampled => {
            let mut by_output: BTreeMap<String, (Option<u64>, RunOutcome)> = BTreeMap::new();
            let mut examined = 0;
            for i in 0..opts.samples {
                let seed = opts.seed.wrapping_add(i as u64);
                let r = run_schedule(&net, &Schedule::Seed(seed), opts.run)?;
                if r.quiesced {
                    examined += 1;
                    by_output.entry(r.union_output.canonical_json()).or_insert((Some(seed), r));
                }
            }
            (by_output.into_values().collect(), examined, true)
        }
    };
    let distinct = runs.len();
    let refs: Vec<(Option<u64>, &RunOutcome)> = runs.iter().map(|(s, r)| (*s, r)).collect();
    let (outcome, witnesses, diff) = if distinct >= 2 {
        let (i, j, d) = closest_pair(&refs)?;
        (ConfluenceOutcome::Divergent, vec![witness(refs[i].0, refs[i].1), witness(refs[j].0, refs[j].1)], Some(d))
    } else if distinct == 1 && complete {
        (ConfluenceOutcome::ConfluentOnInstance, vec![], None)
    } else {
        (ConfluenceOutcome::Inconclusive, vec![], None)
    };
    Ok(ConfluenceVerdict {
        schema_version: VERDICT_SCHEMA_VERSION,
        mode: opts.mode,
        outcome,
        distinct_outcomes: distinct,
        runs_examined,
        complete,
        witnesses,
        diff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoordinationOptions {
    /// Seeded runs per partitioning.
    pub samples: usize,
    pub seed: u64,
    /// Partitionings examined per machine count, colocated ones included.
    pub partition_cap: usize,
    pub run: RunOptions,
}

impl Default for CoordinationOptions {
    fn default() -> Self {
        CoordinationOptions {
            samples: DEFAULT_SAMPLES,
            seed: 0,
            partition_cap: DEFAULT_PARTITION_CAP,
            run: RunOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoordinationVerdict {
    CoordinationFreeOnInstance,
    CoordinationRequiredOnInstance,
    Inconclusive,
}

impl CoordinationVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            CoordinationVerdict::CoordinationFreeOnInstance => "coordination-free-on-instance",
            CoordinationVerdict::CoordinationRequiredOnInstance => "coordination-required-on-instance",
            CoordinationVerdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionSummary {
    pub placement: Partitioning,
    pub colocated: bool,
    pub runs_quiesced: usize,
    /// Fewest inter-machine messages delivered before the final output,
    /// over quiesced runs.
    pub min_messages: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoordinationReport {
    pub schema_version: u32,
    pub machines: usize,
    pub samples_per_partitioning: usize,
    pub partitionings: Vec<PartitionSummary>,
    pub colocated_min_messages: Option<usize>,
    pub verdict: CoordinationVerdict,
}

/// Looks for messages that every explored partitioning needs, including
/// those that put all input on one machine.
pub fn detect_coordination(
    t: &Transducer,
    input: &Database,
    machines: usize,
    opts: CoordinationOptions,
) -> Result<CoordinationReport, VerdictError> {
    let mut partitionings = Vec::new();
    for part in enumerate_partitionings(input, machines.max(1), opts.partition_cap, opts.seed) {
        let net = init_network(t, input, &part)?;
        let mut quiesced = 0;
        let mut min: Option<usize> = None;
        for i in 0..opts.samples {
            let r = run_schedule(&net, &Schedule::Seed(opts.seed.wrapping_add(i as u64)), opts.run)?;
            if r.quiesced {
                quiesced += 1;
                min = Some(min.map_or(r.messages_before_output, |m| m.min(r.messages_before_output)));
            }
        }
        partitionings.push(PartitionSummary {
            colocated: part.is_colocated(),
            placement: part,
            runs_quiesced: quiesced,
            min_messages: min,
        });
    }
    let colocated: Vec<Option<usize>> = partitionings.iter().filter(|p| p.colocated).map(|p| p.min_messages).collect();
    let colocated_min = colocated.iter().flatten().copied().min();
    let verdict = match colocated_min {
        None => CoordinationVerdict::Inconclusive,
        Some(0) => CoordinationVerdict::CoordinationFreeOnInstance,
        Some(_) => CoordinationVerdict::CoordinationRequiredOnInstance,
    };
    Ok(CoordinationReport {
        schema_version: VERDICT_SCHEMA_VERSION,
        machines,
        samples_per_partitioning: opts.samples,
        partitionings,
        colocated_min_messages: colocated_min,
        verdict,
    })
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
    fn single_machine_is_trivially_confluent() {
        let t = transducer(SHARE);
        let db = input("w(a, b). w(b, a).");
        let v =
            check_confluence(&t, &db, &Partitioning::colocated(&db, 1, 0).unwrap(), CheckOptions::default()).unwrap();
        assert_eq!(v.outcome, ConfluenceOutcome::ConfluentOnInstance);
        assert_eq!(v.distinct_outcomes, 1);
    }

    #[test]
    fn compare_same_run_is_empty() {
        let t = transducer(SHARE);
        let db = input("w(a, b).");
        let net = init_network(&t, &db, &Partitioning::hash(&db, 2).unwrap()).unwrap();
        let r = run_schedule(&net, &Schedule::Seed(1), RunOptions::default()).unwrap();
        assert!(compare_outputs(&r, &r).unwrap().is_empty());
    }

    #[test]
    fn compare_rejects_schema_mismatch() {
        let a = input("e(a, b).");
        let b = input("e(a).");
        assert!(diff_databases(&a, &b).is_err());
    }

    #[test]
    fn empty_program_is_coordination_free() {
        let t = transducer("");
        let r = detect_coordination(&t, &Database::new(), 2, CoordinationOptions::default()).unwrap();
        assert_eq!(r.colocated_min_messages, Some(0));
        assert_eq!(r.verdict, CoordinationVerdict::CoordinationFreeOnInstance);
    }

    #[test]
    fn sampled_mode_counts_quiesced_runs() {
        let t = transducer(SHARE);
        let db = input("w(a, b). w(b, c).");
        let opts = CheckOptions { mode: Mode::Sampled, samples: 10, ..CheckOptions::default() };
        let v = check_confluence(&t, &db, &Partitioning::hash(&db, 2).unwrap(), opts).unwrap();
        assert_eq!(v.runs_examined, 10);
        assert_eq!(v.outcome, ConfluenceOutcome::ConfluentOnInstance);
    }

    #[test]
    fn no_quiescent_run_is_inconclusive() {
        let t = transducer(SHARE);
        let db = input("w(a, b).");
        let opts = CheckOptions {
            mode: Mode::Sampled,
            samples: 4,
            run: RunOptions { step_budget: 1, duplicate_every: None },
            ..CheckOptions::default()
        };
        let v = check_confluence(&t, &db, &Partitioning::colocated(&db, 2, 0).unwrap(), opts).unwrap();
        assert_eq!(v.outcome, ConfluenceOutcome::Inconclusive);
    }
}
