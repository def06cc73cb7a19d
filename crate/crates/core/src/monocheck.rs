//! Syntactic monotonicity analysis, predicate dependency graph and
//! stratification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::calmlang::{BodyElem, Rule, ValidatedProgram, RESERVED_ALL, RESERVED_ID};
use crate::syntax::Pos;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Why a rule is not monotone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    Negation,
    Aggregation,
    /// Reads the `all` relation.
    MembershipQuery,
    /// Joins a one-iteration (event or channel) literal with another
    /// relational literal, so the result depends on delivery batching.
    EventJoin,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Negation => "negation",
            Reason::Aggregation => "aggregation",
            Reason::MembershipQuery => "membership-query",
            Reason::EventJoin => "event-join",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MonotonicityClass {
    Monotone,
    NonMonotone(BTreeSet<Reason>),
}

impl MonotonicityClass {
    pub fn is_monotone(&self) -> bool {
        matches!(self, MonotonicityClass::Monotone)
    }

    pub fn reasons(&self) -> Vec<Reason> {
        match self {
            MonotonicityClass::Monotone => vec![],
            MonotonicityClass::NonMonotone(r) => r.iter().copied().collect(),
        }
    }
}

impl fmt::Display for MonotonicityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MonotonicityClass::Monotone => f.write_str("monotone"),
            MonotonicityClass::NonMonotone(r) => {
                let names: Vec<_> = r.iter().map(|r| r.as_str()).collect();
                write!(f, "non-monotone{{{}}}", names.join(", "))
            }
        }
    }
}

/// A non-monotone construct at a source location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoordinationPoint {
    pub rule: usize,
    pub pos: Pos,
    pub reason: Reason,
    pub construct: String,
}

fn point_list(rule_idx: usize, rule: &Rule, p: &ValidatedProgram) -> Vec<CoordinationPoint> {
    let mut out = Vec::new();
    let mut push = |pos: Pos, reason: Reason, construct: String| {
        out.push(CoordinationPoint { rule: rule_idx, pos, reason, construct })
    };
    for (func, var, pos) in rule.head.aggregates() {
        push(pos, Reason::Aggregation, format!("{}<{var}>", func.keyword()));
    }
    let mut event_lit = None;
    let mut other_lit = false;
    for b in &rule.body {
        match b {
            BodyElem::Neg { atom, pos } => push(*pos, Reason::Negation, format!("!{atom}")),
            BodyElem::Pos(atom) if atom.relation == RESERVED_ALL => {
                push(atom.pos, Reason::MembershipQuery, atom.to_string())
            }
            BodyElem::Pos(atom) if atom.relation == RESERVED_ID => {}
            BodyElem::Pos(atom) => {
                let is_event = p.relation(&atom.relation).is_some_and(|r| r.is_event());
                if is_event && event_lit.is_none() {
                    event_lit = Some(atom);
                } else {
                    other_lit = true;
                }
            }
            BodyElem::Cmp { .. } => {}
        }
    }
    if let (Some(atom), true) = (event_lit, other_lit) {
        push(atom.pos, Reason::EventJoin, atom.to_string());
    }
    out.sort_by_key(|c| (c.pos, c.reason));
    out
}

/// Purely syntactic classification of one rule.
pub fn classify_rule(rule: &Rule, p: &ValidatedProgram) -> MonotonicityClass {
    let reasons: BTreeSet<Reason> = point_list(0, rule, p).into_iter().map(|c| c.reason).collect();
    if reasons.is_empty() {
        MonotonicityClass::Monotone
    } else {
        MonotonicityClass::NonMonotone(reasons)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeLabel {
    Positive,
    Negative,
    Aggregate,
}

impl EdgeLabel {
    fn strict(self) -> bool {
        self != EdgeLabel::Positive
    }
}

/// `from` is read by a rule whose head is `to`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct DepEdge {
    pub from: String,
    pub to: String,
    pub label: EdgeLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DependencyGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<DepEdge>,
}

pub fn dependency_graph(p: &ValidatedProgram) -> DependencyGraph {
    let nodes: Vec<String> = p.relations().map(|r| r.name.to_string()).collect();
    let mut edges = BTreeSet::new();
    for rule in p.rules() {
        let to = rule.head.relation.clone();
        let agg = rule.head.has_aggregate();
        for b in &rule.body {
            let (atom, label) = match b {
                BodyElem::Pos(a) if agg => (a, EdgeLabel::Aggregate),
                BodyElem::Pos(a) => (a, EdgeLabel::Positive),
                BodyElem::Neg { atom, .. } => (atom, EdgeLabel::Negative),
                BodyElem::Cmp { .. } => continue,
            };
            edges.insert(DepEdge { from: atom.relation.clone(), to: to.clone(), label });
        }
    }
    // A positive edge is redundant next to a strict one between the same pair.
    let strict: BTreeSet<(String, String)> =
        edges.iter().filter(|e| e.label.strict()).map(|e| (e.from.clone(), e.to.clone())).collect();
    let edges =
        edges.into_iter().filter(|e| e.label.strict() || !strict.contains(&(e.from.clone(), e.to.clone()))).collect();
    DependencyGraph { nodes, edges }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("program is not stratifiable: cycle through negation or aggregation: {}", cycle.join(" -> "))]
pub struct Unstratifiable {
    /// Predicates along the cycle; the first is repeated at the end.
    pub cycle: Vec<String>,
}

/// Lowest-possible stratum for every predicate. Strata are returned bottom
/// up, each a sorted list of predicate names.
pub fn stratify(p: &ValidatedProgram) -> Result<Vec<Vec<String>>, Unstratifiable> {
    let g = dependency_graph(p);
    let levels = levels(&g)?;
    let top = levels.values().copied().max().unwrap_or(0);
    let mut strata = vec![Vec::new(); top + 1];
    for (name, lvl) in levels {
        strata[lvl].push(name);
    }
    Ok(strata)
}

/// Stratum number per predicate.
pub fn strata_map(p: &ValidatedProgram) -> Result<BTreeMap<String, usize>, Unstratifiable> {
    levels(&dependency_graph(p))
}

fn levels(g: &DependencyGraph) -> Result<BTreeMap<String, usize>, Unstratifiable> {
    let mut level: BTreeMap<String, usize> = g.nodes.iter().map(|n| (n.clone(), 0)).collect();
    let limit = g.nodes.len();
    loop {
        let mut changed = false;
        for e in &g.edges {
            let need = level[&e.from] + usize::from(e.label.strict());
            let cur = level.get_mut(&e.to).expect("edge endpoints are nodes");
            if *cur < need {
                *cur = need;
                changed = true;
                if need > limit {
                    return Err(Unstratifiable { cycle: find_cycle(g) });
                }
            }
        }
        if !changed {
            return Ok(level);
        }
    }
}

/// A cycle that contains a strict edge.
fn find_cycle(g: &DependencyGraph) -> Vec<String> {
    for e in g.edges.iter().filter(|e| e.label.strict()) {
        if let Some(path) = path_between(g, &e.to, &e.from) {
            let mut cycle = vec![e.from.clone()];
            cycle.extend(path);
            return cycle;
        }
    }
    Vec::new()
}

fn path_between(g: &DependencyGraph, from: &str, to: &str) -> Option<Vec<String>> {
    let mut prev: BTreeMap<&str, &str> = BTreeMap::new();
    let mut queue = std::collections::VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    while let Some(n) = queue.pop_front() {
        if n == to {
            let mut path = vec![n.to_string()];
            let mut cur = n;
            while let Some(&p) = prev.get(cur) {
                path.push(p.to_string());
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for e in g.edges.iter().filter(|e| e.from == n) {
            if seen.insert(&e.to) {
                prev.insert(&e.to, n);
                queue.push_back(&e.to);
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleReport {
    pub index: usize,
    pub pos: Pos,
    pub rule: String,
    pub class: &'static str,
    pub reasons: Vec<Reason>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub verdict: &'static str,
    pub monotone: bool,
    pub rules: Vec<RuleReport>,
    pub dependency_graph: DependencyGraph,
    pub strata: Option<Vec<Vec<String>>>,
    pub stratification_error: Option<String>,
    pub coordination_points: Vec<CoordinationPoint>,
    pub uses_all: bool,
    pub uses_id: bool,
}

impl AnalysisReport {
    pub fn reasons(&self) -> BTreeSet<Reason> {
        self.rules.iter().flat_map(|r| r.reasons.iter().copied()).collect()
    }

    pub fn class(&self) -> MonotonicityClass {
        if self.monotone {
            MonotonicityClass::Monotone
        } else {
            MonotonicityClass::NonMonotone(self.reasons())
        }
    }
}

pub fn analyze_program(p: &ValidatedProgram) -> AnalysisReport {
    let mut rules = Vec::new();
    let mut points = Vec::new();
    for (i, rule) in p.rules().iter().enumerate() {
        let pts = point_list(i, rule, p);
        let class = classify_rule(rule, p);
        rules.push(RuleReport {
            index: i,
            pos: rule.pos,
            rule: rule.to_string(),
            class: if class.is_monotone() { "monotone" } else { "non-monotone" },
            reasons: class.reasons(),
        });
        points.extend(pts);
    }
    let reads = |name: &str| {
        p.rules().iter().any(|r| {
            r.body.iter().any(|b| match b {
                BodyElem::Pos(a) | BodyElem::Neg { atom: a, .. } => a.relation == name,
                BodyElem::Cmp { .. } => false,
            })
        })
    };
    let monotone = rules.iter().all(|r| r.reasons.is_empty());
    let (strata, stratification_error) = match stratify(p) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    AnalysisReport {
        schema_version: REPORT_SCHEMA_VERSION,
        verdict: if monotone { "monotone" } else { "non-monotone" },
        monotone,
        rules,
        dependency_graph: dependency_graph(p),
        strata,
        stratification_error,
        coordination_points: points,
        uses_all: reads(RESERVED_ALL),
        uses_id: reads(RESERVED_ID),
    }
}
