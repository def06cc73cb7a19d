//! Relational data model: values, facts, databases and deltas.
//!
//! A [`Database`] is an immutable-by-convention value: all operations that
//! combine databases return new ones. Iteration order is canonical because
//! relations are kept in ordered sets over the total order on [`Value`].

mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::Arc;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};

use crate::lattices::LatticeValue;
use crate::syntax::{is_plain_ident, SyntaxError};

pub use text::{parse_facts, parse_lattice, parse_value};

pub type RelName = Arc<str>;
pub type Tuple = Vec<Value>;

/// A column value.
///
/// The derived ordering ranks variants first (integers, text, symbols,
/// addresses, lattices) and then orders naturally within a variant, which
/// gives a total order over every value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Text(Arc<str>),
    Sym(Arc<str>),
    Addr(Arc<str>),
    Lattice(Box<LatticeValue>),
}

impl Value {
    pub fn sym(s: &str) -> Value {
        Value::Sym(Arc::from(s))
    }

    pub fn text(s: &str) -> Value {
        Value::Text(Arc::from(s))
    }

    pub fn addr(s: &str) -> Value {
        Value::Addr(Arc::from(s))
    }

    pub fn lattice(l: LatticeValue) -> Value {
        Value::Lattice(Box::new(l))
    }

    pub fn as_lattice(&self) -> Option<&LatticeValue> {
        match self {
            Value::Lattice(l) => Some(l),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Text(_) => "text",
            Value::Sym(_) => "sym",
            Value::Addr(_) => "addr",
            Value::Lattice(l) => l.variant_name(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Text(s) => write!(f, "{:?}", &**s),
            Value::Sym(s) if is_plain_ident(s) => f.write_str(s),
            Value::Sym(s) => write!(f, "'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
            Value::Addr(s) => write!(f, "@{s}"),
            Value::Lattice(l) => write!(f, "{l}"),
        }
    }
}

/// A ground tuple of a named relation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fact {
    pub relation: RelName,
    pub args: Tuple,
}

impl Fact {
    pub fn new(relation: &str, args: impl IntoIterator<Item = Value>) -> Fact {
        Fact { relation: Arc::from(relation), args: args.into_iter().collect() }
    }

    pub fn from_parts(relation: RelName, args: Tuple) -> Fact {
        Fact { relation, args }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

impl FromStr for Fact {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut facts = parse_facts(s)?;
        match facts.len() {
            1 => Ok(facts.pop().unwrap()),
            n => Err(SyntaxError::new(Default::default(), format!("expected one fact, found {n}"))),
        }
    }
}

impl Serialize for Fact {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Fact {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RelError {
    #[error("schema mismatch for relation `{relation}`: arity {left} vs {right}")]
    SchemaMismatch { relation: String, left: usize, right: usize },
    #[error("ambiguous delta: {} fact(s) both inserted and deleted, first is {first}", .count)]
    AmbiguousDelta { count: usize, first: String },
}

/// A set of facts grouped by relation, with per-relation arities.
///
/// Equality and hashing consider facts only; a declared relation with no
/// facts is indistinguishable from an undeclared one.
#[derive(Debug, Clone, Default)]
pub struct Database {
    schemas: BTreeMap<RelName, usize>,
    relations: BTreeMap<RelName, BTreeSet<Tuple>>,
}

impl PartialEq for Database {
    fn eq(&self, other: &Self) -> bool {
        self.relations == other.relations
    }
}

impl Eq for Database {}

impl Hash for Database {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.relations.hash(state);
    }
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_facts(facts: impl IntoIterator<Item = Fact>) -> Result<Self, RelError> {
        let mut db = Database::new();
        for f in facts {
            db.insert(f)?;
        }
        Ok(db)
    }

    /// Declares `name` with `arity`, or checks it against an earlier declaration.
    pub fn declare(&mut self, name: &RelName, arity: usize) -> Result<(), RelError> {
        match self.schemas.get(name) {
            Some(&a) if a != arity => {
                Err(RelError::SchemaMismatch { relation: name.to_string(), left: a, right: arity })
            }
            Some(_) => Ok(()),
            None => {
                self.schemas.insert(name.clone(), arity);
                Ok(())
            }
        }
    }

    pub fn arity(&self, name: &str) -> Option<usize> {
        self.schemas.get(name).copied()
    }

    pub fn schemas(&self) -> &BTreeMap<RelName, usize> {
        &self.schemas
    }

    /// Inserts a fact, declaring its relation on first use. Returns whether
    /// the fact was new.
    pub fn insert(&mut self, fact: Fact) -> Result<bool, RelError> {
        self.declare(&fact.relation, fact.args.len())?;
        Ok(self.relations.entry(fact.relation).or_default().insert(fact.args))
    }

    /// Inserts a tuple into a relation that must already be declared with
    /// the tuple's arity.
    pub fn insert_tuple(&mut self, name: &RelName, tuple: Tuple) -> Result<bool, RelError> {
        self.declare(name, tuple.len())?;
        Ok(self.relations.entry(name.clone()).or_default().insert(tuple))
    }

    pub fn remove(&mut self, fact: &Fact) -> bool {
        let Some(set) = self.relations.get_mut(&fact.relation) else {
            return false;
        };
        let removed = set.remove(&fact.args);
        if set.is_empty() {
            self.relations.remove(&fact.relation);
        }
        removed
    }

    /// Removes every fact of a relation, keeping its declaration.
    pub fn clear_relation(&mut self, name: &str) {
        self.relations.remove(name);
    }

    pub fn contains(&self, fact: &Fact) -> bool {
        self.relations.get(&fact.relation).is_some_and(|s| s.contains(&fact.args))
    }

    pub fn relation(&self, name: &str) -> Option<&BTreeSet<Tuple>> {
        self.relations.get(name)
    }

    pub fn tuples<'a>(&'a self, name: &str) -> impl Iterator<Item = &'a Tuple> + 'a {
        self.relations.get(name).into_iter().flatten()
    }

    /// Names of relations that currently hold facts.
    pub fn relation_names(&self) -> impl Iterator<Item = &RelName> {
        self.relations.keys()
    }

    /// All facts in canonical order.
    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.relations.iter().flat_map(|(name, set)| set.iter().map(move |t| Fact::from_parts(name.clone(), t.clone())))
    }

    pub fn len(&self) -> usize {
        self.relations.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// Sub-database holding only the relations accepted by `keep`.
    pub fn restrict(&self, mut keep: impl FnMut(&str) -> bool) -> Database {
        Database {
            schemas: self.schemas.iter().filter(|(n, _)| keep(n)).map(|(n, a)| (n.clone(), *a)).collect(),
            relations: self.relations.iter().filter(|(n, _)| keep(n)).map(|(n, s)| (n.clone(), s.clone())).collect(),
        }
    }

    fn check_compatible(&self, other: &Database) -> Result<(), RelError> {
        for (name, &arity) in &self.schemas {
            if let Some(&other_arity) = other.schemas.get(name) {
                if other_arity != arity {
                    return Err(RelError::SchemaMismatch {
                        relation: name.to_string(),
                        left: arity,
                        right: other_arity,
                    });
                }
            }
        }
        Ok(())
    }

    /// Set union; commutative, associative and idempotent.
    pub fn union(&self, other: &Database) -> Result<Database, RelError> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (name, &arity) in &other.schemas {
            out.schemas.entry(name.clone()).or_insert(arity);
        }
        for (name, set) in &other.relations {
            out.relations.entry(name.clone()).or_default().extend(set.iter().cloned());
        }
        Ok(out)
    }

    /// Containment order. Facts without lattice arguments must be present in
    /// `other`; a fact with lattice arguments is covered by a fact that
    /// agrees on every other column and is lattice-greater in each lattice
    /// column.
    pub fn leq(&self, other: &Database) -> Result<bool, RelError> {
        self.check_compatible(other)?;
        for (name, set) in &self.relations {
            let Some(theirs) = other.relations.get(name) else {
                return Ok(false);
            };
            for t in set {
                if theirs.contains(t) {
                    continue;
                }
                if !t.iter().any(|v| v.as_lattice().is_some()) {
                    return Ok(false);
                }
                if !theirs.iter().any(|u| tuple_dominated(t, u)) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// `(db \ deletes) ∪ inserts`
    pub fn apply_delta(&self, delta: &Delta) -> Result<Database, RelError> {
        delta.check()?;
        let mut out = self.clone();
        for f in &delta.deletes {
            out.remove(f);
        }
        for f in &delta.inserts {
            out.insert(f.clone())?;
        }
        Ok(out)
    }

    /// Facts of `self` not in `other`.
    pub fn difference(&self, other: &Database) -> Database {
        let mut out = Database { schemas: self.schemas.clone(), relations: BTreeMap::new() };
        for (name, set) in &self.relations {
            let rest: BTreeSet<Tuple> = match other.relations.get(name) {
                Some(theirs) => set.difference(theirs).cloned().collect(),
                None => set.clone(),
            };
            if !rest.is_empty() {
                out.relations.insert(name.clone(), rest);
            }
        }
        out
    }

    /// One fact per line in canonical order.
    pub fn to_fact_text(&self) -> String {
        let mut s = String::new();
        for f in self.facts() {
            s.push_str(&f.to_string());
            s.push('\n');
        }
        s
    }

    /// Compact canonical JSON: relation names sorted, each relation a list of
    /// fact strings in value order.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("database serialization cannot fail")
    }
}

fn tuple_dominated(t: &Tuple, u: &Tuple) -> bool {
    t.len() == u.len()
        && t.iter().zip(u).all(|(a, b)| match (a, b) {
            (Value::Lattice(x), Value::Lattice(y)) => x.leq(y).unwrap_or(false),
            _ => a == b,
        })
}

impl Serialize for Database {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        struct Rel<'a>(&'a RelName, &'a BTreeSet<Tuple>);
        impl Serialize for Rel<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut seq = s.serialize_seq(Some(self.1.len()))?;
                for t in self.1 {
                    seq.serialize_element(&Fact::from_parts(self.0.clone(), t.clone()).to_string())?;
                }
                seq.end()
            }
        }
        let mut map = s.serialize_map(Some(self.relations.len()))?;
        for (name, set) in &self.relations {
            map.serialize_entry(&**name, &Rel(name, set))?;
        }
        map.end()
    }
}

impl fmt::Display for Database {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_fact_text())
    }
}

/// An unordered batch of insertions and deletions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Delta {
    inserts: BTreeSet<Fact>,
    deletes: BTreeSet<Fact>,
}

impl Delta {
    pub fn new(
        inserts: impl IntoIterator<Item = Fact>,
        deletes: impl IntoIterator<Item = Fact>,
    ) -> Result<Delta, RelError> {
        let d = Delta { inserts: inserts.into_iter().collect(), deletes: deletes.into_iter().collect() };
        d.check()?;
        Ok(d)
    }

    pub fn inserts(&self) -> &BTreeSet<Fact> {
        &self.inserts
    }

    pub fn deletes(&self) -> &BTreeSet<Fact> {
        &self.deletes
    }

    fn check(&self) -> Result<(), RelError> {
        let mut both = self.inserts.intersection(&self.deletes);
        match both.next() {
            None => Ok(()),
            Some(first) => Err(RelError::AmbiguousDelta { count: 1 + both.count(), first: first.to_string() }),
        }
    }
}

/// Free-function forms of the database operations.
pub fn db_union(a: &Database, b: &Database) -> Result<Database, RelError> {
    a.union(b)
}

pub fn db_leq(a: &Database, b: &Database) -> Result<bool, RelError> {
    a.leq(b)
}

pub fn apply_delta(db: &Database, d: &Delta) -> Result<Database, RelError> {
    db.apply_delta(d)
}
