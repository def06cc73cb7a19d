use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use super::*;
use crate::relspace::{Fact, RelName};

/// Resolved facts about one relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelInfo {
    pub name: RelName,
    pub columns: Vec<ColType>,
    pub kind: RelKind,
    pub input: bool,
    pub output: bool,
    /// `id` and `all`, populated by the network rather than by rules.
    pub reserved: bool,
}

impl RelInfo {
    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn lattice_columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.columns.iter().enumerate().filter(|(_, c)| c.is_lattice()).map(|(i, _)| i)
    }

    pub fn has_lattice_columns(&self) -> bool {
        self.lattice_columns().next().is_some()
    }

    pub fn is_event(&self) -> bool {
        !self.kind.is_persisted()
    }
}

/// A program that passed every static check.
#[derive(Debug, Clone)]
pub struct ValidatedProgram {
    program: Program,
    relations: BTreeMap<String, RelInfo>,
}

impl ValidatedProgram {
    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn rules(&self) -> &[Rule] {
        &self.program.rules
    }

    pub fn relation(&self, name: &str) -> Option<&RelInfo> {
        self.relations.get(name)
    }

    /// Relations in name order, including the reserved ones.
    pub fn relations(&self) -> impl Iterator<Item = &RelInfo> {
        self.relations.values()
    }

    pub fn input_relations(&self) -> impl Iterator<Item = &RelInfo> {
        self.relations().filter(|r| r.input)
    }

    pub fn output_relations(&self) -> impl Iterator<Item = &RelInfo> {
        self.relations().filter(|r| r.output)
    }

    pub fn is_output(&self, name: &str) -> bool {
        self.relation(name).is_some_and(|r| r.output)
    }

    /// Checks a fixture fact: it must belong to an input relation and match
    /// its column types.
    pub fn check_input_fact(&self, fact: &Fact) -> Result<(), String> {
        let Some(info) = self.relation(&fact.relation) else {
            return Err(format!("fact {fact} names undeclared relation `{}`", fact.relation));
        };
        if !info.input {
            return Err(format!("fact {fact}: relation `{}` is not declared `input`", fact.relation));
        }
        if info.arity() != fact.arity() {
            return Err(format!("fact {fact}: relation `{}` has arity {}", fact.relation, info.arity()));
        }
        for (i, (ty, v)) in info.columns.iter().zip(&fact.args).enumerate() {
            if !ty.accepts(v) {
                return Err(format!("fact {fact}: column {} expects {}, found {}", i + 1, ty.keyword(), v.kind_name()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationErrorKind {
    UndeclaredRelation(String),
    ArityMismatch {
        relation: String,
        expected: usize,
        found: usize,
    },
    /// Head variable that no positive body literal binds.
    RangeRestriction(String),
    UnboundNegation {
        relation: String,
        var: String,
    },
    UnboundComparison(String),
    UnboundAggregate(String),
    WildcardInHead,
    HeadIsInput(String),
    HeadIsReserved(String),
    ReservedDeclared(String),
    ChannelWithoutAddress(String),
    ChannelMarked(String),
    BroadcastMisplaced,
    LatticeUnderNegation(String),
    ConstantType {
        relation: String,
        column: usize,
        expected: ColType,
        found: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError {
    pub pos: Pos,
    pub kind: ValidationErrorKind,
}

impl fmt::Display for ValidationErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ValidationErrorKind::*;
        match self {
            UndeclaredRelation(r) => write!(f, "relation `{r}` is not declared"),
            ArityMismatch { relation, expected, found } => {
                write!(f, "relation `{relation}` has arity {expected}, used with {found} argument(s)")
            }
            RangeRestriction(v) => {
                write!(f, "unsafe rule: head variable `{v}` does not appear in a positive body literal")
            }
            UnboundNegation { relation, var } => {
                write!(f, "unsafe negation of `{relation}`: variable `{var}` is not bound by a positive literal")
            }
            UnboundComparison(v) => write!(f, "unsafe comparison: variable `{v}` is not bound by a positive literal"),
            UnboundAggregate(v) => write!(f, "aggregated variable `{v}` is not bound by a positive literal"),
            WildcardInHead => write!(f, "`_` cannot appear in a rule head"),
            HeadIsInput(r) => write!(f, "input relation `{r}` cannot be derived by a rule"),
            HeadIsReserved(r) => write!(f, "reserved relation `{r}` cannot be derived by a rule"),
            ReservedDeclared(r) => write!(f, "`{r}` is reserved and cannot be declared"),
            ChannelWithoutAddress(r) => write!(f, "channel `{r}` must have an `addr` first column"),
            ChannelMarked(r) => write!(f, "channel `{r}` cannot be marked input or output"),
            BroadcastMisplaced => write!(f, "`*` is only allowed as the first argument of a channel head"),
            LatticeUnderNegation(r) => write!(f, "relation `{r}` has lattice columns and cannot be negated"),
            ConstantType { relation, column, expected, found } => {
                write!(f, "column {column} of `{relation}` expects {}, found {found}", expected.keyword())
            }
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pos, self.kind)
    }
}

/// Every problem found in a program, in source order.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ValidationErrors(pub Vec<ValidationError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

fn reserved(name: &str) -> RelInfo {
    RelInfo {
        name: Arc::from(name),
        columns: vec![ColType::Addr],
        kind: RelKind::Table,
        input: false,
        output: false,
        reserved: true,
    }
}

pub fn validate_program(program: Program) -> Result<ValidatedProgram, ValidationErrors> {
    let mut errors = Vec::new();
    let mut relations = BTreeMap::new();
    for name in [RESERVED_ALL, RESERVED_ID] {
        relations.insert(name.to_string(), reserved(name));
    }

    for d in &program.decls {
        let err = |kind| ValidationError { pos: d.pos, kind };
        if d.name == RESERVED_ALL || d.name == RESERVED_ID {
            errors.push(err(ValidationErrorKind::ReservedDeclared(d.name.clone())));
            continue;
        }
        if d.kind == RelKind::Channel {
            if d.columns.first().map(|c| c.ty) != Some(ColType::Addr) {
                errors.push(err(ValidationErrorKind::ChannelWithoutAddress(d.name.clone())));
            }
            if d.input || d.output {
                errors.push(err(ValidationErrorKind::ChannelMarked(d.name.clone())));
            }
        }
        relations.insert(
            d.name.clone(),
            RelInfo {
                name: Arc::from(d.name.as_str()),
                columns: d.columns.iter().map(|c| c.ty).collect(),
                kind: d.kind,
                input: d.input,
                output: d.output,
                reserved: false,
            },
        );
    }

    for rule in &program.rules {
        check_rule(rule, &relations, &mut errors);
    }

    if errors.is_empty() {
        Ok(ValidatedProgram { program, relations })
    } else {
        errors.sort_by_key(|e| e.pos);
        Err(ValidationErrors(errors))
    }
}

fn check_atom(
    atom: &Atom,
    relations: &BTreeMap<String, RelInfo>,
    errors: &mut Vec<ValidationError>,
) -> Option<RelInfo> {
    let Some(info) = relations.get(&atom.relation) else {
        errors.push(ValidationError {
            pos: atom.pos,
            kind: ValidationErrorKind::UndeclaredRelation(atom.relation.clone()),
        });
        return None;
    };
    if info.arity() != atom.terms.len() {
        errors.push(ValidationError {
            pos: atom.pos,
            kind: ValidationErrorKind::ArityMismatch {
                relation: atom.relation.clone(),
                expected: info.arity(),
                found: atom.terms.len(),
            },
        });
        return None;
    }
    for (i, (t, ty)) in atom.terms.iter().zip(&info.columns).enumerate() {
        if let Term::Const(v) = t {
            if !ty.accepts(v) {
                errors.push(ValidationError {
                    pos: atom.pos,
                    kind: ValidationErrorKind::ConstantType {
                        relation: atom.relation.clone(),
                        column: i + 1,
                        expected: *ty,
                        found: v.kind_name().to_string(),
                    },
                });
            }
        }
    }
    Some(info.clone())
}

fn term_vars(t: &Term) -> Option<&str> {
    match t {
        Term::Var(v) => Some(v),
        _ => None,
    }
}

fn check_rule(rule: &Rule, relations: &BTreeMap<String, RelInfo>, errors: &mut Vec<ValidationError>) {
    let mut bound: BTreeSet<&str> = BTreeSet::new();
    for atom in rule.positives() {
        check_atom(atom, relations, errors);
        bound.extend(atom.terms.iter().filter_map(term_vars));
    }

    for (atom, pos) in rule.negatives() {
        if let Some(info) = check_atom(atom, relations, errors) {
            if info.has_lattice_columns() {
                errors.push(ValidationError {
                    pos,
                    kind: ValidationErrorKind::LatticeUnderNegation(atom.relation.clone()),
                });
            }
        }
        for v in atom.terms.iter().filter_map(term_vars) {
            if !bound.contains(v) {
                errors.push(ValidationError {
                    pos,
                    kind: ValidationErrorKind::UnboundNegation { relation: atom.relation.clone(), var: v.to_string() },
                });
            }
        }
    }

    for b in &rule.body {
        if let BodyElem::Cmp { lhs, rhs, pos, .. } = b {
            for t in [lhs, rhs] {
                match t {
                    Term::Var(v) if !bound.contains(v.as_str()) => errors
                        .push(ValidationError { pos: *pos, kind: ValidationErrorKind::UnboundComparison(v.clone()) }),
                    Term::Wildcard => errors
                        .push(ValidationError { pos: *pos, kind: ValidationErrorKind::UnboundComparison("_".into()) }),
                    _ => {}
                }
            }
        }
    }

    let head = &rule.head;
    let hpos = head.pos;
    let head_info = relations.get(&head.relation);
    match head_info {
        None => errors
            .push(ValidationError { pos: hpos, kind: ValidationErrorKind::UndeclaredRelation(head.relation.clone()) }),
        Some(info) if info.reserved => {
            errors.push(ValidationError { pos: hpos, kind: ValidationErrorKind::HeadIsReserved(head.relation.clone()) })
        }
        Some(info) if info.input => {
            errors.push(ValidationError { pos: hpos, kind: ValidationErrorKind::HeadIsInput(head.relation.clone()) })
        }
        Some(info) if info.arity() != head.terms.len() => errors.push(ValidationError {
            pos: hpos,
            kind: ValidationErrorKind::ArityMismatch {
                relation: head.relation.clone(),
                expected: info.arity(),
                found: head.terms.len(),
            },
        }),
        _ => {}
    }

    for (i, t) in head.terms.iter().enumerate() {
        match t {
            HeadTerm::Broadcast => {
                let is_channel = head_info.is_some_and(|r| r.kind == RelKind::Channel);
                if i != 0 || !is_channel {
                    errors.push(ValidationError { pos: hpos, kind: ValidationErrorKind::BroadcastMisplaced });
                }
            }
            HeadTerm::Term(Term::Wildcard) => {
                errors.push(ValidationError { pos: hpos, kind: ValidationErrorKind::WildcardInHead })
            }
            HeadTerm::Term(Term::Var(v)) if !bound.contains(v.as_str()) => {
                errors.push(ValidationError { pos: hpos, kind: ValidationErrorKind::RangeRestriction(v.clone()) })
            }
            HeadTerm::Term(Term::Const(v)) => {
                if let Some(ty) = head_info.and_then(|r| r.columns.get(i)) {
                    if !ty.accepts(v) {
                        errors.push(ValidationError {
                            pos: hpos,
                            kind: ValidationErrorKind::ConstantType {
                                relation: head.relation.clone(),
                                column: i + 1,
                                expected: *ty,
                                found: v.kind_name().to_string(),
                            },
                        });
                    }
                }
            }
            HeadTerm::Aggregate { var, pos, .. } if !bound.contains(var.as_str()) => {
                errors.push(ValidationError { pos: *pos, kind: ValidationErrorKind::UnboundAggregate(var.clone()) })
            }
            _ => {}
        }
    }
}
