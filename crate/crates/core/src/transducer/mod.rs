//! One machine of the network: ingest a batch of facts, query to fixpoint,
//! send derived channel facts.

mod eval;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;

pub use eval::{Compiled, Evaluation};

use crate::calmlang::{RelKind, ValidatedProgram, RESERVED_ALL, RESERVED_ID};
use crate::lattices::VariantMismatch;
use crate::monocheck::Unstratifiable;
use crate::relspace::{Database, Fact, RelError, Value};

pub const DEFAULT_STEP_BOUND: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransducerError {
    #[error("evaluation did not reach a fixpoint within {bound} iterations in stratum {stratum}")]
    StepBound { stratum: usize, bound: usize },
    #[error("routing error: {0}")]
    Routing(String),
    #[error(transparent)]
    Relation(#[from] RelError),
    #[error(transparent)]
    Unstratifiable(#[from] Unstratifiable),
    #[error("lattice merge in `{relation}`: {source}")]
    Lattice { relation: String, source: VariantMismatch },
}

/// A validated program ready to run on machines.
#[derive(Debug, Clone)]
pub struct Transducer {
    program: Arc<ValidatedProgram>,
    compiled: Arc<Compiled>,
}

impl Transducer {
    pub fn new(program: ValidatedProgram) -> Result<Transducer, Unstratifiable> {
        Self::with_step_bound(program, DEFAULT_STEP_BOUND)
    }

    pub fn with_step_bound(program: ValidatedProgram, step_bound: usize) -> Result<Transducer, Unstratifiable> {
        let compiled = Arc::new(Compiled::new(&program, step_bound)?);
        Ok(Transducer { program: Arc::new(program), compiled })
    }

    pub fn program(&self) -> &ValidatedProgram {
        &self.program
    }

    pub fn compiled(&self) -> &Compiled {
        &self.compiled
    }

    /// Local fixpoint of the program over `db`. Channel facts derived by the
    /// program are not part of the result.
    pub fn evaluate(&self, db: &Database) -> Result<Database, TransducerError> {
        Ok(self.compiled.evaluate(self.load(db)?)?.local)
    }

    /// Like [`Transducer::evaluate`], also returning the channel facts the
    /// program would send.
    pub fn evaluate_full(&self, db: &Database) -> Result<Evaluation, TransducerError> {
        self.compiled.evaluate(self.load(db)?)
    }

    fn load(&self, db: &Database) -> Result<Database, TransducerError> {
        let mut out = Database::new();
        for f in db.facts() {
            let rel = self
                .compiled
                .rel_name(&f.relation)
                .ok_or_else(|| TransducerError::Routing(format!("fact {f} names an undeclared relation")))?
                .clone();
            self.compiled.insert(&mut out, &rel, f.args)?;
        }
        Ok(out)
    }

    /// The output view of a database: its fixpoint restricted to output
    /// relations.
    pub fn output_view(&self, db: &Database) -> Result<Database, TransducerError> {
        let p = &self.program;
        Ok(self.evaluate(db)?.restrict(|r| p.is_output(r)))
    }

    /// Persisted facts only.
    fn persisted(&self, db: &Database) -> Database {
        let p = &self.program;
        db.restrict(|r| p.relation(r).is_some_and(|i| i.kind.is_persisted()))
    }
}

/// Evaluates `p` over `db` with the default step bound.
pub fn evaluate(db: &Database, p: &ValidatedProgram) -> Result<Database, TransducerError> {
    Transducer::new(p.clone())?.evaluate(db)
}

/// State of one machine between loop iterations.
#[derive(Debug, Clone)]
pub struct MachineState {
    pub address: String,
    pub persisted: Database,
    pub iteration: u64,
    /// Every (destination, fact) pair already sent. Facts are sent once.
    pub sent: BTreeSet<(String, Fact)>,
    transducer: Transducer,
    output: Database,
    needs_tick: bool,
}

impl PartialEq for MachineState {
    fn eq(&self, other: &Self) -> bool {
        self.address == other.address && self.persisted == other.persisted && self.sent == other.sent
    }
}

impl Eq for MachineState {}

impl std::hash::Hash for MachineState {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.address.hash(state);
        self.persisted.hash(state);
        self.sent.hash(state);
    }
}

/// The outcome of one loop iteration.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub new_state: MachineState,
    pub outbound: BTreeMap<String, BTreeSet<Fact>>,
    /// Output facts that became visible in this step.
    pub output_delta: BTreeSet<Fact>,
}

impl MachineState {
    /// A fresh machine with `id` and `all` populated.
    pub fn new(transducer: Transducer, address: &str, members: &[String]) -> Result<MachineState, TransducerError> {
        let mut persisted = Database::new();
        persisted.insert(Fact::new(RESERVED_ID, [Value::addr(address)]))?;
        for m in members {
            persisted.insert(Fact::new(RESERVED_ALL, [Value::addr(m)]))?;
        }
        let mut state = MachineState {
            address: address.to_string(),
            persisted,
            iteration: 0,
            sent: BTreeSet::new(),
            transducer,
            output: Database::new(),
            needs_tick: false,
        };
        state.refresh()?;
        Ok(state)
    }

    pub fn transducer(&self) -> &Transducer {
        &self.transducer
    }

    /// Output relations of the fixpoint over persisted state.
    pub fn output(&self) -> &Database {
        &self.output
    }

    /// Whether a step with an empty inbox would change persisted state or
    /// send something.
    pub fn needs_tick(&self) -> bool {
        self.needs_tick
    }

    fn members(&self) -> BTreeSet<String> {
        self.persisted
            .tuples(RESERVED_ALL)
            .filter_map(|t| match &t[0] {
                Value::Addr(a) => Some(a.to_string()),
                _ => None,
            })
            .collect()
    }

    fn check_inbox(&self, fact: &Fact) -> Result<(), TransducerError> {
        let p = self.transducer.program();
        let Some(info) = p.relation(&fact.relation) else {
            return Err(TransducerError::Routing(format!("{} received {fact}: undeclared relation", self.address)));
        };
        if info.arity() != fact.arity() {
            return Err(TransducerError::Routing(format!("{} received {fact}: wrong arity", self.address)));
        }
        match info.kind {
            RelKind::Channel => match &fact.args[0] {
                Value::Addr(a) if **a == *self.address => Ok(()),
                _ => Err(TransducerError::Routing(format!("{} received {fact}: addressed elsewhere", self.address))),
            },
            _ if info.input => Ok(()),
            _ => Err(TransducerError::Routing(format!(
                "{} received {fact}: only channel and input facts can be delivered",
                self.address
            ))),
        }
    }

    /// One Ingest, Query, Send iteration.
    pub fn step(&self, inbox: &[Fact]) -> Result<StepResult, TransducerError> {
        for f in inbox {
            self.check_inbox(f)?;
        }
        let t = &self.transducer;
        let mut db = self.persisted.clone();
        for f in inbox {
            let rel = t.compiled().rel_name(&f.relation).expect("checked above").clone();
            t.compiled().insert(&mut db, &rel, f.args.clone())?;
        }
        let eval = t.compiled().evaluate(db)?;
        let members = self.members();
        let mut outbound: BTreeMap<String, BTreeSet<Fact>> = BTreeMap::new();
        let mut sent = self.sent.clone();
        for f in eval.sends.facts() {
            let dest = match &f.args[0] {
                Value::Addr(a) if members.contains(&**a) => a.to_string(),
                other => {
                    return Err(TransducerError::Routing(format!(
                        "{} sent {f} to {other}, which is not a network member",
                        self.address
                    )))
                }
            };
            if sent.insert((dest.clone(), f.clone())) {
                outbound.entry(dest).or_default().insert(f);
            }
        }
        let mut next = MachineState {
            address: self.address.clone(),
            persisted: t.persisted(&eval.local),
            iteration: self.iteration + 1,
            sent,
            transducer: t.clone(),
            output: Database::new(),
            needs_tick: false,
        };
        next.refresh()?;
        let output_delta = next.output.difference(&self.output).facts().collect();
        Ok(StepResult { new_state: next, outbound, output_delta })
    }

    /// Recomputes the output view and the tick flag from persisted state.
    fn refresh(&mut self) -> Result<(), TransducerError> {
        let t = &self.transducer;
        let eval = t.compiled().evaluate(self.persisted.clone())?;
        let p = t.program();
        self.output = eval.local.restrict(|r| p.is_output(r));
        let grows = t.persisted(&eval.local) != self.persisted;
        let sends = eval.sends.facts().any(|f| match &f.args[0] {
            Value::Addr(a) => !self.sent.contains(&(a.to_string(), f.clone())),
            _ => true,
        });
        self.needs_tick = grows || sends;
        Ok(())
    }

    /// Canonical JSON of the machine state, for debugging.
    pub fn dump(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Dump<'a> {
            address: &'a str,
            iteration: u64,
            persisted: &'a Database,
            sent: Vec<String>,
        }
        serde_json::to_value(Dump {
            address: &self.address,
            iteration: self.iteration,
            persisted: &self.persisted,
            sent: self.sent.iter().map(|(d, f)| format!("{d} <- {f}")).collect(),
        })
        .expect("state serializes")
    }
}
