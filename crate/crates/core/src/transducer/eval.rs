//! Stratified semi-naive evaluation of a validated program.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::calmlang::{AggFunc, BodyElem, CmpOp, HeadTerm, RelKind, Term, ValidatedProgram, RESERVED_ALL, RESERVED_ID};
use crate::monocheck::{strata_map, Unstratifiable};
use crate::relspace::{Database, RelName, Tuple, Value};

use super::TransducerError;

#[derive(Debug, Clone)]
enum CTerm {
    Var(usize),
    Const(Value),
    Wild,
}

#[derive(Debug, Clone)]
enum HTerm {
    Var(usize),
    Const(Value),
    Broadcast,
    Agg(AggFunc, usize),
}

#[derive(Debug, Clone)]
struct CAtom {
    rel: RelName,
    terms: Vec<CTerm>,
}

#[derive(Debug, Clone)]
struct CRule {
    head_rel: RelName,
    head: Vec<HTerm>,
    positives: Vec<CAtom>,
    negatives: Vec<CAtom>,
    cmps: Vec<(CmpOp, CTerm, CTerm)>,
    nvars: usize,
    aggregate: bool,
    /// Head is a channel: derived facts leave the machine.
    sends: bool,
}

#[derive(Debug, Clone)]
struct RelMeta {
    kind: RelKind,
    /// Lattice column positions; merged on insert into persisted relations.
    merge_cols: Vec<usize>,
}

/// A program compiled for repeated evaluation.
#[derive(Debug)]
pub struct Compiled {
    rules: Vec<CRule>,
    strata: Vec<Vec<usize>>,
    meta: HashMap<RelName, RelMeta>,
    names: HashMap<String, RelName>,
    step_bound: usize,
}

/// Result of one evaluation: the local database and the channel facts
/// derived for sending.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub local: Database,
    pub sends: Database,
}

impl Compiled {
    pub fn new(p: &ValidatedProgram, step_bound: usize) -> Result<Compiled, Unstratifiable> {
        let levels = strata_map(p)?;
        let mut names = HashMap::new();
        let mut meta = HashMap::new();
        for r in p.relations() {
            names.insert(r.name.to_string(), r.name.clone());
            let merge_cols = if r.kind.is_persisted() { r.lattice_columns().collect() } else { vec![] };
            meta.insert(r.name.clone(), RelMeta { kind: r.kind, merge_cols });
        }
        let top = levels.values().copied().max().unwrap_or(0);
        let mut strata = vec![Vec::new(); top + 1];
        let mut rules = Vec::new();
        for rule in p.rules() {
            let mut vars: HashMap<String, usize> = HashMap::new();
            let term = |t: &Term, vars: &mut HashMap<String, usize>| match t {
                Term::Var(v) => {
                    let n = vars.len();
                    CTerm::Var(*vars.entry(v.clone()).or_insert(n))
                }
                Term::Const(c) => CTerm::Const(c.clone()),
                Term::Wildcard => CTerm::Wild,
            };
            let mut positives = Vec::new();
            let mut negatives = Vec::new();
            let mut cmps = Vec::new();
            for b in &rule.body {
                if let BodyElem::Pos(a) = b {
                    positives.push(CAtom {
                        rel: names[&a.relation].clone(),
                        terms: a.terms.iter().map(|t| term(t, &mut vars)).collect(),
                    });
                }
            }
            for b in &rule.body {
                match b {
                    BodyElem::Neg { atom, .. } => negatives.push(CAtom {
                        rel: names[&atom.relation].clone(),
                        terms: atom.terms.iter().map(|t| term(t, &mut vars)).collect(),
                    }),
                    BodyElem::Cmp { op, lhs, rhs, .. } => cmps.push((*op, term(lhs, &mut vars), term(rhs, &mut vars))),
                    BodyElem::Pos(_) => {}
                }
            }
            let head = rule
                .head
                .terms
                .iter()
                .map(|t| match t {
                    HeadTerm::Broadcast => HTerm::Broadcast,
                    HeadTerm::Aggregate { func, var, .. } => match term(&Term::Var(var.clone()), &mut vars) {
                        CTerm::Var(i) => HTerm::Agg(*func, i),
                        _ => unreachable!(),
                    },
                    HeadTerm::Term(t) => match term(t, &mut vars) {
                        CTerm::Var(i) => HTerm::Var(i),
                        CTerm::Const(c) => HTerm::Const(c),
                        CTerm::Wild => unreachable!("validated heads have no wildcard"),
                    },
                })
                .collect();
            let head_rel = names[&rule.head.relation].clone();
            let sends = meta[&head_rel].kind == RelKind::Channel;
            strata[levels[&rule.head.relation]].push(rules.len());
            rules.push(CRule {
                head_rel,
                head,
                positives,
                negatives,
                cmps,
                nvars: vars.len(),
                aggregate: rule.head.has_aggregate(),
                sends,
            });
        }
        Ok(Compiled { rules, strata, meta, names, step_bound })
    }

    pub fn step_bound(&self) -> usize {
        self.step_bound
    }

    pub fn rel_name(&self, name: &str) -> Option<&RelName> {
        self.names.get(name)
    }

    pub fn kind(&self, name: &str) -> Option<RelKind> {
        self.meta.get(name).map(|m| m.kind)
    }

    /// Inserts with lattice merge for persisted relations. Returns the stored
    /// tuple when the database changed.
    pub fn insert(&self, db: &mut Database, rel: &RelName, tuple: Tuple) -> Result<Option<Tuple>, TransducerError> {
        let cols = self.meta.get(rel).map(|m| m.merge_cols.as_slice()).unwrap_or(&[]);
        if cols.is_empty() {
            return Ok(db.insert_tuple(rel, tuple.clone())?.then_some(tuple));
        }
        let same_key = |t: &Tuple| t.iter().zip(&tuple).enumerate().all(|(i, (a, b))| cols.contains(&i) || a == b);
        let existing = db.tuples(rel).find(|t| same_key(t)).cloned();
        let Some(old) = existing else {
            return Ok(db.insert_tuple(rel, tuple.clone())?.then_some(tuple));
        };
        let mut merged = old.clone();
        for &c in cols {
            if let (Value::Lattice(a), Value::Lattice(b)) = (&old[c], &tuple[c]) {
                let m = a.merge(b).map_err(|e| TransducerError::Lattice { relation: rel.to_string(), source: e })?;
                merged[c] = Value::lattice(m);
            }
        }
        if merged == old {
            return Ok(None);
        }
        db.remove(&crate::relspace::Fact::from_parts(rel.clone(), old));
        db.insert_tuple(rel, merged.clone())?;
        Ok(Some(merged))
    }

    /// Stratum-by-stratum least fixpoint over `db`.
    pub fn evaluate(&self, db: Database) -> Result<Evaluation, TransducerError> {
        let mut local = db;
        let mut sends = Database::new();
        let me: Option<Value> = local.tuples(RESERVED_ID).next().map(|t| t[0].clone());
        let members: Vec<Value> = local.tuples(RESERVED_ALL).map(|t| t[0].clone()).collect();
        let peers: Vec<Value> = members.into_iter().filter(|m| Some(m) != me.as_ref()).collect();

        for (stratum, rule_ids) in self.strata.iter().enumerate() {
            if rule_ids.is_empty() {
                continue;
            }
            let recursive: BTreeSet<&RelName> =
                rule_ids.iter().map(|&r| &self.rules[r].head_rel).filter(|r| !self.is_channel(r)).collect();

            let mut delta = Database::new();
            for &r in rule_ids {
                let rule = &self.rules[r];
                let derived = if rule.aggregate {
                    self.fire_aggregate(rule, &local)
                } else {
                    self.fire(rule, &local, None, &peers)
                };
                self.absorb(rule, derived, &mut local, &mut sends, &mut delta)?;
            }

            let mut rounds = 0usize;
            while !delta.is_empty() {
                rounds += 1;
                if rounds > self.step_bound {
                    return Err(TransducerError::StepBound { stratum, bound: self.step_bound });
                }
                let mut next = Database::new();
                for &r in rule_ids {
                    let rule = &self.rules[r];
                    if rule.aggregate {
                        continue;
                    }
                    for (i, atom) in rule.positives.iter().enumerate() {
                        if !recursive.contains(&atom.rel) || delta.relation(&atom.rel).is_none() {
                            continue;
                        }
                        let derived = self.fire(rule, &local, Some((i, &delta)), &peers);
                        self.absorb(rule, derived, &mut local, &mut sends, &mut next)?;
                    }
                }
                delta = next;
            }
        }
        Ok(Evaluation { local, sends })
    }

    fn is_channel(&self, rel: &str) -> bool {
        self.meta.get(rel).is_some_and(|m| m.kind == RelKind::Channel)
    }

    fn absorb(
        &self,
        rule: &CRule,
        derived: Vec<Tuple>,
        local: &mut Database,
        sends: &mut Database,
        delta: &mut Database,
    ) -> Result<(), TransducerError> {
        for t in derived {
            if rule.sends {
                sends.insert_tuple(&rule.head_rel, t)?;
            } else if let Some(stored) = self.insert(local, &rule.head_rel, t)? {
                delta.insert_tuple(&rule.head_rel, stored)?;
            }
        }
        Ok(())
    }

    /// All head tuples of a non-aggregate rule. With `delta`, positive
    /// literal `i` ranges over the delta database only.
    fn fire(&self, rule: &CRule, db: &Database, delta: Option<(usize, &Database)>, peers: &[Value]) -> Vec<Tuple> {
        let mut order: Vec<usize> = (0..rule.positives.len()).collect();
        if let Some((i, _)) = delta {
            order.retain(|&j| j != i);
            order.insert(0, i);
        }
        let mut out = Vec::new();
        let mut env = vec![None; rule.nvars];
        self.join(rule, &order, 0, db, delta, &mut env, &mut |env| {
            if rule.head.iter().any(|h| matches!(h, HTerm::Broadcast)) {
                for p in peers {
                    out.push(instantiate(&rule.head, env, Some(p)));
                }
            } else {
                out.push(instantiate(&rule.head, env, None));
            }
        });
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn join(
        &self,
        rule: &CRule,
        order: &[usize],
        depth: usize,
        db: &Database,
        delta: Option<(usize, &Database)>,
        env: &mut Vec<Option<Value>>,
        emit: &mut dyn FnMut(&[Option<Value>]),
    ) {
        if depth == order.len() {
            if self.filters_hold(rule, db, env) {
                emit(env);
            }
            return;
        }
        let idx = order[depth];
        let atom = &rule.positives[idx];
        let source = match delta {
            Some((i, d)) if i == idx => d,
            _ => db,
        };
        for tuple in source.tuples(&atom.rel) {
            let mut bound = Vec::new();
            if unify(&atom.terms, tuple, env, &mut bound) {
                self.join(rule, order, depth + 1, db, delta, env, emit);
            }
            for v in bound {
                env[v] = None;
            }
        }
    }

    fn filters_hold(&self, rule: &CRule, db: &Database, env: &[Option<Value>]) -> bool {
        for (op, l, r) in &rule.cmps {
            let (Some(a), Some(b)) = (resolve(l, env), resolve(r, env)) else {
                return false;
            };
            if !op.holds(a, b) {
                return false;
            }
        }
        for atom in &rule.negatives {
            if db.tuples(&atom.rel).any(|t| matches_bound(&atom.terms, t, env)) {
                return false;
            }
        }
        true
    }

    fn fire_aggregate(&self, rule: &CRule, db: &Database) -> Vec<Tuple> {
        let order: Vec<usize> = (0..rule.positives.len()).collect();
        let mut groups: BTreeMap<Vec<Value>, Vec<BTreeSet<Value>>> = BTreeMap::new();
        let aggs: Vec<usize> = rule
            .head
            .iter()
            .filter_map(|h| match h {
                HTerm::Agg(_, v) => Some(*v),
                _ => None,
            })
            .collect();
        let mut env = vec![None; rule.nvars];
        self.join(rule, &order, 0, db, None, &mut env, &mut |env| {
            let key: Vec<Value> = rule
                .head
                .iter()
                .filter_map(|h| match h {
                    HTerm::Var(v) => env[*v].clone(),
                    HTerm::Const(c) => Some(c.clone()),
                    _ => None,
                })
                .collect();
            let sets = groups.entry(key).or_insert_with(|| vec![BTreeSet::new(); aggs.len()]);
            for (slot, v) in aggs.iter().enumerate() {
                if let Some(val) = &env[*v] {
                    sets[slot].insert(val.clone());
                }
            }
        });
        groups
            .into_iter()
            .map(|(key, sets)| {
                let mut key = key.into_iter();
                let mut agg = sets.into_iter();
                rule.head
                    .iter()
                    .map(|h| match h {
                        HTerm::Agg(func, _) => {
                            let set = agg.next().expect("one set per aggregate");
                            match func {
                                AggFunc::Count => Value::Int(set.len() as i64),
                                AggFunc::Min => set.into_iter().next().expect("groups are nonempty"),
                                AggFunc::Max => set.into_iter().next_back().expect("groups are nonempty"),
                            }
                        }
                        _ => key.next().expect("one key value per plain head term"),
                    })
                    .collect()
            })
            .collect()
    }
}

fn resolve<'a>(t: &'a CTerm, env: &'a [Option<Value>]) -> Option<&'a Value> {
    match t {
        CTerm::Var(v) => env[*v].as_ref(),
        CTerm::Const(c) => Some(c),
        CTerm::Wild => None,
    }
}

fn unify(terms: &[CTerm], tuple: &Tuple, env: &mut [Option<Value>], bound: &mut Vec<usize>) -> bool {
    for (t, v) in terms.iter().zip(tuple) {
        match t {
            CTerm::Wild => {}
            CTerm::Const(c) => {
                if c != v {
                    return false;
                }
            }
            CTerm::Var(i) => match &env[*i] {
                Some(x) if x != v => return false,
                Some(_) => {}
                None => {
                    env[*i] = Some(v.clone());
                    bound.push(*i);
                }
            },
        }
    }
    true
}

fn matches_bound(terms: &[CTerm], tuple: &Tuple, env: &[Option<Value>]) -> bool {
    terms.iter().zip(tuple).all(|(t, v)| match t {
        CTerm::Wild => true,
        CTerm::Const(c) => c == v,
        CTerm::Var(i) => env[*i].as_ref().is_none_or(|x| x == v),
    })
}

fn instantiate(head: &[HTerm], env: &[Option<Value>], dest: Option<&Value>) -> Tuple {
    head.iter()
        .map(|h| match h {
            HTerm::Var(v) => env[*v].clone().expect("range-restricted head variable"),
            HTerm::Const(c) => c.clone(),
            HTerm::Broadcast => dest.cloned().expect("broadcast destination"),
            HTerm::Agg(..) => unreachable!("aggregate heads are built separately"),
        })
        .collect()
}
