//! Plain-text renderings of reports.

use std::fmt::Write;

use calmlab::monocheck::AnalysisReport;
use calmlab::netsim::RunOutcome;
use calmlab::relspace::Database;
use calmlab::verdicts::{ConfluenceVerdict, CoordinationReport};

use crate::corpus::CorpusEntry;

fn facts_block(out: &mut String, db: &Database) {
    if db.is_empty() {
        out.push_str("  (empty)\n");
    }
    for f in db.facts() {
        let _ = writeln!(out, "  {f}.");
    }
}

pub fn analysis(r: &AnalysisReport) -> String {
    let mut out = String::new();
    if r.monotone {
        out.push_str("verdict: monotone\n");
    } else {
        let reasons: Vec<&str> = r.reasons().into_iter().map(|x| x.as_str()).collect();
        let _ = writeln!(out, "verdict: non-monotone {{{}}}", reasons.join(", "));
    }
    match (&r.strata, &r.stratification_error) {
        (Some(strata), _) => {
            let _ = writeln!(out, "strata: {}", strata.len());
            for (i, s) in strata.iter().enumerate() {
                let _ = writeln!(out, "  {i}: {}", s.join(", "));
            }
        }
        (None, Some(e)) => {
            let _ = writeln!(out, "strata: unstratifiable: {e}");
        }
        (None, None) => {}
    }
    let _ = writeln!(out, "coordination points: {}", r.coordination_points.len());
    for p in &r.coordination_points {
        let _ = writeln!(out, "  {} rule {} {}: {}", p.pos, p.rule, p.reason, p.construct);
    }
    if r.uses_all {
        out.push_str("reads membership (all)\n");
    }
    if r.uses_id {
        out.push_str("reads own address (id)\n");
    }
    out
}

pub fn run(r: &RunOutcome) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "quiesced: {}", r.quiesced);
    let _ = writeln!(out, "steps: {}", r.steps);
    let _ = writeln!(out, "messages delivered: {}", r.messages_delivered);
    let _ = writeln!(out, "messages before final output: {}", r.messages_before_output);
    out.push_str("union output:\n");
    facts_block(&mut out, &r.union_output);
    out
}

pub fn confluence(v: &ConfluenceVerdict) -> String {
    let mut out = String::new();
    let mode = match v.mode {
        calmlab::verdicts::Mode::Exhaustive => "exhaustive",
        calmlab::verdicts::Mode::Sampled => "sampled",
    };
    let _ = writeln!(out, "verdict: {} ({mode})", v.outcome.as_str());
    let _ = writeln!(out, "distinct outcomes: {}", v.distinct_outcomes);
    let _ = writeln!(out, "runs examined: {}", v.runs_examined);
    if !v.complete {
        out.push_str("search stopped at the state bound\n");
    }
    if let Some(d) = &v.diff {
        out.push_str("outputs differ on:\n");
        for f in d.facts() {
            let _ = writeln!(out, "  {f}.");
        }
    }
    for (i, w) in v.witnesses.iter().enumerate() {
        let seed = w.seed.map(|s| format!(" (seed {s})")).unwrap_or_default();
        let _ = writeln!(out, "witness {}{seed}:", i + 1);
        facts_block(&mut out, &w.union_output);
    }
    out
}

pub fn coordination(r: &CoordinationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "verdict: {}", r.verdict.as_str());
    match r.colocated_min_messages {
        Some(n) => {
            let _ = writeln!(out, "colocated min messages: {n}");
        }
        None => out.push_str("colocated min messages: none quiesced\n"),
    }
    let _ = writeln!(out, "partitionings explored: {}", r.partitionings.len());
    let min = r.partitionings.iter().filter_map(|p| p.min_messages).min();
    if let Some(min) = min {
        let _ = writeln!(out, "min messages over all partitionings: {min}");
    }
    out
}

pub fn corpus_list(entries: &[CorpusEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let class =
            if e.monotone { "monotone".to_string() } else { format!("non-monotone {{{}}}", e.reasons.join(", ")) };
        let fixtures: Vec<&str> = e.fixtures.iter().map(|f| f.name).collect();
        let _ = writeln!(out, "{:<20} {:<44} {}", e.name, class, fixtures.join(", "));
    }
    out
}
