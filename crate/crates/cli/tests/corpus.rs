use std::collections::BTreeSet;
use std::path::Path;

use calmlab::monocheck::analyze_program;
use calmlab::netsim::{init_network, run_schedule, Partitioning, RunOptions, Schedule};
use calmlab::relspace::{Database, Fact};
use calmlab::transducer::Transducer;
use calmlab::verdicts::{
    check_confluence, detect_coordination, CheckOptions, ConfluenceOutcome, CoordinationOptions, CoordinationVerdict,
};
use calmlab_cli::config::Session;
use calmlab_cli::corpus::{entries, entry, Expected};

fn corpus_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus"))
}

#[test]
fn every_entry_has_files_on_disk() {
    assert_eq!(entries().len(), 8);
    for e in entries() {
        assert!(corpus_dir().join(e.program_file).is_file(), "{}", e.program_file);
        assert!(corpus_dir().join(format!("{}.md", e.name)).is_file(), "{} has no README", e.name);
        for f in e.fixtures {
            assert!(corpus_dir().join(f.file).is_file(), "{}", f.file);
        }
        let from_disk = Session::load(&corpus_dir().join(e.config_file)).unwrap();
        let embedded = e.session().unwrap();
        assert_eq!(from_disk.input, embedded.input, "{}", e.name);
        assert_eq!(from_disk.partitioning().unwrap(), embedded.partitioning().unwrap());
    }
}

#[test]
fn static_verdicts_match() {
    for e in entries() {
        let report = analyze_program(&e.program().unwrap());
        assert_eq!(report.monotone, e.monotone, "{}", e.name);
        let reasons: BTreeSet<&str> = report.reasons().into_iter().map(|r| r.as_str()).collect();
        assert_eq!(reasons, e.reasons.iter().copied().collect(), "{}", e.name);
    }
}

#[test]
fn gc_has_one_coordination_point_and_two_strata() {
    let report = analyze_program(&entry("gc").unwrap().program().unwrap());
    assert_eq!(report.coordination_points.len(), 1);
    assert_eq!(report.coordination_points[0].construct, "!reach(X)");
    let strata = report.strata.unwrap();
    assert_eq!(strata.len(), 2);
    assert!(strata[0].contains(&"reach".to_string()) && strata[0].contains(&"known_ref".to_string()));
    assert_eq!(strata[1], ["garbage"]);
}

#[test]
fn deadlock_parses_to_closure_and_cycle_rules() {
    let p = entry("deadlock").unwrap().program().unwrap();
    let heads: Vec<&str> = p.rules().iter().map(|r| r.head.relation.as_str()).collect();
    assert_eq!(heads.iter().filter(|h| **h == "path").count(), 2);
    assert_eq!(heads.iter().filter(|h| **h == "deadlock").count(), 1);
}

fn outcome(e: &str, f: &str, part: impl Fn(&Database) -> Partitioning, opts: CheckOptions) -> ConfluenceOutcome {
    let e = entry(e).unwrap();
    let db = e.input(e.fixture(f).unwrap()).unwrap();
    let t = Transducer::new(e.program().unwrap()).unwrap();
    check_confluence(&t, &db, &part(&db), opts).unwrap().outcome
}

#[test]
fn dynamic_verdicts_match() {
    let light = CoordinationOptions { samples: 8, partition_cap: 9, ..CoordinationOptions::default() };
    for e in entries() {
        let t = Transducer::new(e.program().unwrap()).unwrap();
        for f in e.fixtures {
            let db = e.input(f).unwrap();
            for want in f.expected {
                match want {
                    Expected::ConfluentEverywhere => {
                        for m in 2..=3 {
                            for part in
                                [Partitioning::hash(&db, m).unwrap(), Partitioning::colocated(&db, m, 1).unwrap()]
                            {
                                assert_eq!(
                                    outcome(e.name, f.name, |_| part.clone(), CheckOptions::default()),
                                    ConfluenceOutcome::ConfluentOnInstance,
                                    "{}/{}",
                                    e.name,
                                    f.name
                                );
                            }
                        }
                    }
                    Expected::ConfluentUnderConfig | Expected::DivergentUnderConfig => {
                        let s = e.session().unwrap();
                        assert_eq!(s.input, db, "{} config uses {}", e.name, f.name);
                        let v = check_confluence(
                            &s.transducer,
                            &s.input,
                            &s.partitioning().unwrap(),
                            s.config.check_options(),
                        )
                        .unwrap();
                        let expected = if *want == Expected::DivergentUnderConfig {
                            ConfluenceOutcome::Divergent
                        } else {
                            ConfluenceOutcome::ConfluentOnInstance
                        };
                        assert_eq!(v.outcome, expected, "{}/{}", e.name, f.name);
                        if v.outcome == ConfluenceOutcome::Divergent {
                            assert_eq!(v.witnesses.len(), 2);
                            assert_ne!(v.witnesses[0].union_output, v.witnesses[1].union_output);
                        }
                    }
                    Expected::CoordinationFree | Expected::CoordinationRequired => {
                        let r = detect_coordination(&t, &db, 2, light).unwrap();
                        let expected = if *want == Expected::CoordinationFree {
                            CoordinationVerdict::CoordinationFreeOnInstance
                        } else {
                            CoordinationVerdict::CoordinationRequiredOnInstance
                        };
                        assert_eq!(r.verdict, expected, "{}/{}", e.name, f.name);
                    }
                }
            }
        }
    }
}

#[test]
fn non_monotone_entries_show_divergence_or_coordination() {
    for e in entries().iter().filter(|e| !e.monotone && e.name != "cart-manifest") {
        let evidence = e.fixtures.iter().any(|f| {
            f.expected.contains(&Expected::DivergentUnderConfig) || f.expected.contains(&Expected::CoordinationRequired)
        });
        assert!(evidence, "{} has no divergence or coordination evidence", e.name);
    }
}

#[test]
fn gc_witnesses_replay_and_differ_on_o4() {
    let s = entry("gc").unwrap().session().unwrap();
    let v = check_confluence(&s.transducer, &s.input, &s.partitioning().unwrap(), CheckOptions::default()).unwrap();
    let o4: Fact = "garbage(O4)".parse().unwrap();
    assert!(v.witnesses.iter().any(|w| w.union_output.contains(&o4)));
    assert!(v.witnesses.iter().any(|w| !w.union_output.contains(&o4)));
    let net = init_network(&s.transducer, &s.input, &s.partitioning().unwrap()).unwrap();
    for w in &v.witnesses {
        let replay = run_schedule(&net, &w.schedule, RunOptions::default()).unwrap();
        assert_eq!(replay.union_output.canonical_json(), w.union_output.canonical_json());
    }
}

#[test]
fn gc_evaluation_shrinks_as_the_graph_grows() {
    let e = entry("gc").unwrap();
    let s = e.session().unwrap();
    let part = s.partitioning().unwrap();
    let m3 = Database::from_facts(part.local(2)).unwrap();
    let o4: Fact = "garbage(O4)".parse().unwrap();
    assert!(s.transducer.output_view(&m3).unwrap().contains(&o4));
    assert!(!s.transducer.output_view(&s.input).unwrap().contains(&o4));
}

#[test]
fn deadlock_any_seed_finds_both_cycles() {
    let s = entry("deadlock").unwrap().session().unwrap();
    let net = init_network(&s.transducer, &s.input, &s.partitioning().unwrap()).unwrap();
    let cycles: Vec<Fact> = ["deadlock(T1, T2)", "deadlock(T1, T3)"].iter().map(|f| f.parse().unwrap()).collect();
    for seed in 0..20 {
        let r = run_schedule(&net, &Schedule::Seed(seed), RunOptions::default()).unwrap();
        assert!(r.quiesced);
        assert!(cycles.iter().all(|c| r.union_output.contains(c)), "seed {seed}");
    }
}

#[test]
fn deadlock_sampled_runs_have_empty_diff() {
    let s = entry("deadlock").unwrap().session().unwrap();
    let net = init_network(&s.transducer, &s.input, &s.partitioning().unwrap()).unwrap();
    let a = run_schedule(&net, &Schedule::Seed(1), RunOptions::default()).unwrap();
    let b = run_schedule(&net, &Schedule::Seed(2), RunOptions::default()).unwrap();
    assert!(calmlab::verdicts::compare_outputs(&a, &b).unwrap().is_empty());
}
