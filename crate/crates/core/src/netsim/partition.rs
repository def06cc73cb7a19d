use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::relspace::{Database, Fact};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PartitionError {
    #[error("a network needs at least one machine")]
    NoMachines,
    #[error("input fact {0} is not assigned to any machine")]
    Unassigned(String),
    #[error("input fact {0} is assigned to more than one machine")]
    DoublyAssigned(String),
    #[error("fact {0} is assigned but is not part of the input")]
    NotInput(String),
    #[error("unknown machine `{0}`")]
    UnknownMachine(String),
}

/// Machine addresses `m1..mM`.
pub fn machine_names(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("m{i}")).collect()
}

/// Assignment of every input fact to exactly one machine.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partitioning {
    machines: Vec<String>,
    assignment: BTreeMap<Fact, usize>,
}

impl Partitioning {
    fn build(machines: Vec<String>, assignment: BTreeMap<Fact, usize>) -> Result<Self, PartitionError> {
        if machines.is_empty() {
            return Err(PartitionError::NoMachines);
        }
        Ok(Partitioning { machines, assignment })
    }

    /// All input on machine `at` (0-based) of `m`.
    pub fn colocated(input: &Database, m: usize, at: usize) -> Result<Self, PartitionError> {
        let at = at.min(m.saturating_sub(1));
        Self::build(machine_names(m), input.facts().map(|f| (f, at)).collect())
    }

    /// Each fact goes to the machine picked by a SHA-256 of its text.
    pub fn hash(input: &Database, m: usize) -> Result<Self, PartitionError> {
        if m == 0 {
            return Err(PartitionError::NoMachines);
        }
        let assignment = input
            .facts()
            .map(|f| {
                let digest = Sha256::digest(f.to_string().as_bytes());
                let mut word = [0u8; 8];
                word.copy_from_slice(&digest[..8]);
                let slot = (u64::from_be_bytes(word) % m as u64) as usize;
                (f, slot)
            })
            .collect();
        Self::build(machine_names(m), assignment)
    }

    /// Explicit placement. Every input fact must appear exactly once.
    pub fn explicit(
        input: &Database,
        m: usize,
        placement: &BTreeMap<String, Vec<Fact>>,
    ) -> Result<Self, PartitionError> {
        let machines = machine_names(m);
        let all: BTreeSet<Fact> = input.facts().collect();
        let mut assignment = BTreeMap::new();
        for (machine, facts) in placement {
            let idx = machines
                .iter()
                .position(|n| n == machine)
                .ok_or_else(|| PartitionError::UnknownMachine(machine.clone()))?;
            for f in facts {
                if !all.contains(f) {
                    return Err(PartitionError::NotInput(f.to_string()));
                }
                if assignment.insert(f.clone(), idx).is_some() {
                    return Err(PartitionError::DoublyAssigned(f.to_string()));
                }
            }
        }
        if let Some(missing) = all.iter().find(|f| !assignment.contains_key(*f)) {
            return Err(PartitionError::Unassigned(missing.to_string()));
        }
        Self::build(machines, assignment)
    }

    /// Builds from a slot per fact, in the input's canonical fact order.
    pub fn from_slots(input: &Database, m: usize, slots: &[usize]) -> Result<Self, PartitionError> {
        let facts: Vec<Fact> = input.facts().collect();
        if slots.len() != facts.len() {
            return Err(PartitionError::Unassigned(facts.get(slots.len()).map(|f| f.to_string()).unwrap_or_default()));
        }
        Self::build(machine_names(m), facts.into_iter().zip(slots.iter().map(|&s| s.min(m - 1))).collect())
    }

    pub fn machines(&self) -> &[String] {
        &self.machines
    }

    pub fn machine_count(&self) -> usize {
        self.machines.len()
    }

    pub fn assignment(&self) -> impl Iterator<Item = (&Fact, &str)> {
        self.assignment.iter().map(|(f, &i)| (f, self.machines[i].as_str()))
    }

    /// Facts held by machine `idx`.
    pub fn local(&self, idx: usize) -> Vec<Fact> {
        self.assignment.iter().filter(|(_, &i)| i == idx).map(|(f, _)| f.clone()).collect()
    }

    /// True if one machine holds every fact.
    pub fn is_colocated(&self) -> bool {
        let used: BTreeSet<usize> = self.assignment.values().copied().collect();
        used.len() <= 1
    }

    /// Checks that the partitioning covers exactly `input`.
    pub fn check_covers(&self, input: &Database) -> Result<(), PartitionError> {
        let all: BTreeSet<Fact> = input.facts().collect();
        if let Some(f) = all.iter().find(|f| !self.assignment.contains_key(*f)) {
            return Err(PartitionError::Unassigned(f.to_string()));
        }
        if let Some(f) = self.assignment.keys().find(|f| !all.contains(*f)) {
            return Err(PartitionError::NotInput(f.to_string()));
        }
        Ok(())
    }

    /// `{machine: [facts]}` with every machine listed.
    pub fn placement(&self) -> BTreeMap<String, Vec<String>> {
        let mut out: BTreeMap<String, Vec<String>> = self.machines.iter().map(|m| (m.clone(), vec![])).collect();
        for (f, m) in self.assignment() {
            out.get_mut(m).expect("known machine").push(f.to_string());
        }
        out
    }
}

impl serde::Serialize for Partitioning {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.placement().serialize(s)
    }
}

/// Every assignment of the input to `m` machines when there are at most
/// `cap` of them. Otherwise the `m` colocated variants plus seeded random
/// assignments, `cap` in total.
pub fn enumerate_partitionings(input: &Database, m: usize, cap: usize, seed: u64) -> Vec<Partitioning> {
    let n = input.len();
    let total = (m as u128).checked_pow(n as u32);
    if total.is_some_and(|t| t <= cap as u128) {
        let total = total.unwrap() as usize;
        return (0..total)
            .map(|mut code| {
                let slots: Vec<usize> = (0..n)
                    .map(|_| {
                        let s = code % m;
                        code /= m;
                        s
                    })
                    .collect();
                Partitioning::from_slots(input, m, &slots).expect("slot count matches")
            })
            .collect();
    }
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut out = Vec::new();
    for at in 0..m {
        let slots = vec![at; n];
        seen.insert(slots.clone());
        out.push(Partitioning::from_slots(input, m, &slots).expect("slot count matches"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0;
    while out.len() < cap && attempts < cap * 20 {
        attempts += 1;
        let mut slots: Vec<usize> = (0..n).map(|_| rng.gen_range(0..m)).collect();
        if rng.gen_bool(0.25) {
            slots.shuffle(&mut rng);
        }
        if seen.insert(slots.clone()) {
            out.push(Partitioning::from_slots(input, m, &slots).expect("slot count matches"));
        }
    }
    out
}
