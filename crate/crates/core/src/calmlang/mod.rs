//! The rule language in which transducer programs are written.
//!
//! A program is a list of relation declarations followed (or interleaved)
//! with rules:
//!
//! ```text
//! input table waits(sym, sym).
//! channel share(addr, sym, sym).
//! output table deadlock(sym, sym).
//!
//! share(*, X, Y) :- waits(X, Y).
//! deadlock(X, Y) :- edge(X, Y), path(Y, X), X < Y.
//! ```
//!
//! Non-monotone constructs are syntactically loud: negation is `!rel(..)`
//! and aggregates are `count<V>`, `min<V>`, `max<V>` in rule heads.

mod parser;
mod validate;

use std::fmt;

use serde::Serialize;

use crate::relspace::Value;
use crate::syntax::{is_plain_ident, Pos};

pub use parser::parse_program;
pub use validate::{
    validate_program, RelInfo, ValidatedProgram, ValidationError, ValidationErrorKind, ValidationErrors,
};

/// Names reserved for network membership and identity.
pub const RESERVED_ALL: &str = "all";
pub const RESERVED_ID: &str = "id";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ColType {
    Int,
    Text,
    Sym,
    Addr,
    Any,
    GSet,
    MaxInt,
    BoolOr,
    TwoPSet,
}

impl ColType {
    pub fn from_keyword(s: &str) -> Option<ColType> {
        Some(match s {
            "int" => ColType::Int,
            "text" => ColType::Text,
            "sym" => ColType::Sym,
            "addr" => ColType::Addr,
            "any" => ColType::Any,
            "gset" => ColType::GSet,
            "maxint" => ColType::MaxInt,
            "boolor" => ColType::BoolOr,
            "twopset" => ColType::TwoPSet,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            ColType::Int => "int",
            ColType::Text => "text",
            ColType::Sym => "sym",
            ColType::Addr => "addr",
            ColType::Any => "any",
            ColType::GSet => "gset",
            ColType::MaxInt => "maxint",
            ColType::BoolOr => "boolor",
            ColType::TwoPSet => "twopset",
        }
    }

    pub fn is_lattice(self) -> bool {
        matches!(self, ColType::GSet | ColType::MaxInt | ColType::BoolOr | ColType::TwoPSet)
    }

    pub fn accepts(self, v: &Value) -> bool {
        use crate::lattices::LatticeValue as L;
        match (self, v) {
            (ColType::Any, _) => true,
            (ColType::Int, Value::Int(_))
            | (ColType::Text, Value::Text(_))
            | (ColType::Sym, Value::Sym(_))
            | (ColType::Addr, Value::Addr(_)) => true,
            (ColType::GSet, Value::Lattice(l)) => matches!(**l, L::GSet(_)),
            (ColType::MaxInt, Value::Lattice(l)) => matches!(**l, L::MaxInt(_)),
            (ColType::BoolOr, Value::Lattice(l)) => matches!(**l, L::BoolOr(_)),
            (ColType::TwoPSet, Value::Lattice(l)) => matches!(**l, L::TwoPSet(_)),
            _ => false,
        }
    }
}

/// Storage class of a relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RelKind {
    /// Persisted: facts accumulate across loop iterations.
    Table,
    /// Facts live for one iteration.
    Event,
    /// Event relation whose first column names the destination machine.
    Channel,
}

impl RelKind {
    pub fn keyword(self) -> &'static str {
        match self {
            RelKind::Table => "table",
            RelKind::Event => "event",
            RelKind::Channel => "channel",
        }
    }

    pub fn is_persisted(self) -> bool {
        self == RelKind::Table
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: Option<String>,
    pub ty: ColType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelDecl {
    pub name: String,
    pub columns: Vec<Column>,
    pub kind: RelKind,
    pub input: bool,
    pub output: bool,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Const(Value),
    Wildcard,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub relation: String,
    pub terms: Vec<Term>,
    pub pos: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFunc {
    Count,
    Min,
    Max,
}

impl AggFunc {
    pub fn keyword(self) -> &'static str {
        match self {
            AggFunc::Count => "count",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HeadTerm {
    Term(Term),
    Aggregate {
        func: AggFunc,
        var: String,
        pos: Pos,
    },
    /// `*` in the address column of a channel head: send to every peer.
    Broadcast,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Head {
    pub relation: String,
    pub terms: Vec<HeadTerm>,
    pub pos: Pos,
}

impl Head {
    pub fn aggregates(&self) -> impl Iterator<Item = (AggFunc, &str, Pos)> {
        self.terms.iter().filter_map(|t| match t {
            HeadTerm::Aggregate { func, var, pos } => Some((*func, var.as_str(), *pos)),
            _ => None,
        })
    }

    pub fn has_aggregate(&self) -> bool {
        self.aggregates().next().is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CmpOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
        }
    }

    pub fn holds(self, a: &Value, b: &Value) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BodyElem {
    Pos(Atom),
    /// `pos` is the location of the `!`.
    Neg {
        atom: Atom,
        pos: Pos,
    },
    Cmp {
        op: CmpOp,
        lhs: Term,
        rhs: Term,
        pos: Pos,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub head: Head,
    pub body: Vec<BodyElem>,
    pub pos: Pos,
}

impl Rule {
    pub fn positives(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter_map(|b| match b {
            BodyElem::Pos(a) => Some(a),
            _ => None,
        })
    }

    pub fn negatives(&self) -> impl Iterator<Item = (&Atom, Pos)> {
        self.body.iter().filter_map(|b| match b {
            BodyElem::Neg { atom, pos } => Some((atom, *pos)),
            _ => None,
        })
    }

    pub fn negation_count(&self) -> usize {
        self.negatives().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub decls: Vec<RelDecl>,
    pub rules: Vec<Rule>,
}

impl Program {
    /// Copy with every source position zeroed, for structural comparison.
    pub fn without_positions(&self) -> Program {
        let z = Pos::default();
        let atom = |a: &Atom| Atom { pos: z, ..a.clone() };
        Program {
            decls: self.decls.iter().map(|d| RelDecl { pos: z, ..d.clone() }).collect(),
            rules: self
                .rules
                .iter()
                .map(|r| Rule {
                    pos: z,
                    head: Head {
                        relation: r.head.relation.clone(),
                        pos: z,
                        terms: r
                            .head
                            .terms
                            .iter()
                            .map(|t| match t {
                                HeadTerm::Aggregate { func, var, .. } => {
                                    HeadTerm::Aggregate { func: *func, var: var.clone(), pos: z }
                                }
                                other => other.clone(),
                            })
                            .collect(),
                    },
                    body: r
                        .body
                        .iter()
                        .map(|b| match b {
                            BodyElem::Pos(a) => BodyElem::Pos(atom(a)),
                            BodyElem::Neg { atom: a, .. } => BodyElem::Neg { atom: atom(a), pos: z },
                            BodyElem::Cmp { op, lhs, rhs, .. } => {
                                BodyElem::Cmp { op: *op, lhs: lhs.clone(), rhs: rhs.clone(), pos: z }
                            }
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Writes a constant so that the rule parser reads it back as the same
/// constant (symbols that look like variables get quoted).
fn write_const(f: &mut fmt::Formatter<'_>, v: &Value) -> fmt::Result {
    match v {
        Value::Sym(s) if !is_plain_ident(s) || !s.starts_with(|c: char| c.is_ascii_lowercase()) => {
            write!(f, "'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
        }
        other => write!(f, "{other}"),
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) => write_const(f, c),
            Term::Wildcard => f.write_str("_"),
        }
    }
}

fn write_args<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    f.write_str("(")?;
    for (i, t) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{t}")?;
    }
    f.write_str(")")
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.relation)?;
        write_args(f, &self.terms)
    }
}

impl fmt::Display for HeadTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadTerm::Term(t) => write!(f, "{t}"),
            HeadTerm::Aggregate { func, var, .. } => write!(f, "{}<{var}>", func.keyword()),
            HeadTerm::Broadcast => f.write_str("*"),
        }
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.relation)?;
        write_args(f, &self.terms)
    }
}

impl fmt::Display for BodyElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BodyElem::Pos(a) => write!(f, "{a}"),
            BodyElem::Neg { atom, .. } => write!(f, "!{atom}"),
            BodyElem::Cmp { op, lhs, rhs, .. } => write!(f, "{lhs} {} {rhs}", op.symbol()),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        if !self.body.is_empty() {
            f.write_str(" :- ")?;
            for (i, b) in self.body.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{b}")?;
            }
        }
        f.write_str(".")
    }
}

impl fmt::Display for RelDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.input {
            f.write_str("input ")?;
        }
        if self.output {
            f.write_str("output ")?;
        }
        write!(f, "{} {}(", self.kind.keyword(), self.name)?;
        for (i, c) in self.columns.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            if let Some(n) = &c.name {
                write!(f, "{n}: ")?;
            }
            f.write_str(c.ty.keyword())?;
        }
        f.write_str(").")
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.decls {
            writeln!(f, "{d}")?;
        }
        if !self.decls.is_empty() && !self.rules.is_empty() {
            writeln!(f)?;
        }
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}
