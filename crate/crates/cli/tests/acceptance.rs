//! Acceptance criteria. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use calmlab::lattices::{merge, LatticeValue, TwoPhaseSet};
use calmlab::monocheck::analyze_program;
use calmlab::netsim::{enumerate_partitionings, init_network, run_schedule, Partitioning, RunOptions, Schedule};
use calmlab::relspace::{Database, Fact, Value};
use calmlab::transducer::Transducer;
use calmlab::verdicts::{
    check_confluence, detect_coordination, CheckOptions, ConfluenceOutcome, CoordinationOptions, CoordinationVerdict,
    Mode,
};
use calmlab_cli::corpus::{self, CorpusEntry, Expected, Fixture};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn entry(name: &str) -> &'static CorpusEntry {
    corpus::entry(name).expect("corpus entry")
}

fn transducer(e: &CorpusEntry) -> Transducer {
    Transducer::new(e.program().expect("corpus program is valid")).expect("corpus program stratifies")
}

fn input(e: &CorpusEntry, f: &Fixture) -> Database {
    e.input(f).expect("fixture loads")
}

fn facts(src: &[&str]) -> BTreeSet<Fact> {
    src.iter().map(|s| s.parse().expect("fact")).collect()
}

fn golden(name: &str, actual: &str) -> Result<(), String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{name} differs from golden:\n--- expected\n{expected}--- actual\n{actual}"))
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    for e in corpus::entries().iter().filter(|e| e.monotone) {
        let t = transducer(e);
        for f in e.fixtures {
            let db = input(e, f);
            if db.len() > 12 {
                return Err(format!("{}/{} has {} facts", e.name, f.name, db.len()));
            }
            for m in 1..=3 {
                for part in enumerate_partitionings(&db, m, usize::MAX, 0) {
                    let v = check_confluence(&t, &db, &part, CheckOptions::default()).map_err(|x| x.to_string())?;
                    if v.outcome != ConfluenceOutcome::ConfluentOnInstance || v.distinct_outcomes != 1 {
                        return Err(format!(
                            "{}/{} M={m} {:?}: {} with {} outcomes",
                            e.name,
                            f.name,
                            part.placement(),
                            v.outcome.as_str(),
                            v.distinct_outcomes
                        ));
                    }
                    checked += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs > 60.0 {
        return Err(format!("{checked} instances confluent but took {secs:.1}s (target 60s)"));
    }
    Ok(format!("{checked} program x fixture x partitioning instances confluent in {secs:.1}s"))
}

fn config_check(name: &str) -> Result<calmlab::verdicts::ConfluenceVerdict, String> {
    let s = entry(name).session().map_err(|e| e.to_string())?;
    let part = s.partitioning().map_err(|e| e.to_string())?;
    check_confluence(&s.transducer, &s.input, &part, s.config.check_options()).map_err(|e| e.to_string())
}

fn diff_text(v: &calmlab::verdicts::ConfluenceVerdict) -> String {
    let diff = v.diff.as_ref().map(|d| d.facts()).unwrap_or_default();
    diff.iter().map(|f| format!("{f}.\n")).collect()
}

fn criterion_2() -> Outcome {
    let gc = config_check("gc")?;
    if gc.outcome != ConfluenceOutcome::Divergent {
        return Err(format!("gc on the remote-reference graph is {}", gc.outcome.as_str()));
    }
    let diff: BTreeSet<Fact> = gc.diff.as_ref().map(|d| d.facts().into_iter().collect()).unwrap_or_default();
    if diff != facts(&["garbage(O4)"]) {
        return Err(format!("gc witness diff is {diff:?}"));
    }
    golden("gc-divergence.facts", &diff_text(&gc))?;
    let cart = config_check("cart-naive")?;
    if cart.distinct_outcomes < 2 {
        return Err(format!("cart-naive has {} quiescent outcomes", cart.distinct_outcomes));
    }
    golden("cart-naive-divergence.facts", &diff_text(&cart))?;
    Ok(format!("gc diff = {{garbage(O4)}}; cart-naive has {} distinct outcomes", cart.distinct_outcomes))
}

fn criterion_3() -> Outcome {
    let s = entry("deadlock").session().map_err(|e| e.to_string())?;
    let net = init_network(&s.transducer, &s.input, &s.partitioning().map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let ex =
        calmlab::netsim::enumerate_schedules(&net, calmlab::netsim::DEFAULT_STATE_BOUND).map_err(|e| e.to_string())?;
    if !ex.complete {
        return Err("deadlock schedule enumeration hit the state bound".into());
    }
    let want = facts(&["deadlock(T1, T2)", "deadlock(T1, T3)"]);
    for o in &ex.outcomes {
        let got: BTreeSet<Fact> = o.union_output.facts().collect();
        if got != want {
            return Err(format!("deadlock schedule produced {got:?}"));
        }
    }
    let gc = entry("gc");
    let remote = gc.fixture("gc-remote-refs").expect("fixture");
    let db = input(gc, remote);
    let t = transducer(gc);
    let net = init_network(&t, &db, &Partitioning::colocated(&db, 1, 0).unwrap()).map_err(|e| e.to_string())?;
    let r = run_schedule(&net, &Schedule::Seed(0), RunOptions::default()).map_err(|e| e.to_string())?;
    let got: BTreeSet<Fact> = r.union_output.facts().collect();
    if got != facts(&["garbage(O5)", "garbage(O6)"]) {
        return Err(format!("colocated gc produced {got:?}"));
    }
    Ok(format!(
        "deadlock cycles {{T1,T2}} and {{T1,T3}} under all {} quiescent states; colocated garbage = {{O5, O6}}",
        ex.quiescent_states
    ))
}

fn criterion_4() -> Outcome {
    let mut notes = Vec::new();
    for (name, want) in [
        ("deadlock", CoordinationVerdict::CoordinationFreeOnInstance),
        ("gc-coordinated", CoordinationVerdict::CoordinationRequiredOnInstance),
    ] {
        let e = entry(name);
        let t = transducer(e);
        let machines = e.config().map_err(|x| x.to_string())?.machines;
        for f in e.fixtures {
            let r = detect_coordination(&t, &input(e, f), machines, CoordinationOptions::default())
                .map_err(|x| x.to_string())?;
            let min_ok = match want {
                CoordinationVerdict::CoordinationFreeOnInstance => r.colocated_min_messages == Some(0),
                _ => r.colocated_min_messages.is_some_and(|n| n >= 1),
            };
            if r.verdict != want || !min_ok {
                return Err(format!(
                    "{name}/{}: {} with colocated min {:?}",
                    f.name,
                    r.verdict.as_str(),
                    r.colocated_min_messages
                ));
            }
            notes.push(format!("{name}/{} colocated min {}", f.name, r.colocated_min_messages.unwrap()));
        }
    }
    Ok(notes.join("; "))
}

/// `(S, T)` with `S ⊆ T`, `T` drawn from `all` and `|T \ S|` in 1..=3.
fn subset_pair(all: &[Fact], rng: &mut ChaCha8Rng) -> (Database, Database) {
    let mut shuffled = all.to_vec();
    shuffled.shuffle(rng);
    let t_len = rng.gen_range(1..=shuffled.len());
    let extra = rng.gen_range(1..=t_len.min(3));
    let t: Vec<Fact> = shuffled[..t_len].to_vec();
    let s: Vec<Fact> = t[..t_len - extra].to_vec();
    (Database::from_facts(s).unwrap(), Database::from_facts(t).unwrap())
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pairs = 0;
    for e in corpus::entries().iter().filter(|e| e.monotone) {
        let t = transducer(e);
        for f in e.fixtures {
            let all: Vec<Fact> = input(e, f).facts().collect();
            for _ in 0..20 {
                let (s, big) = subset_pair(&all, &mut rng);
                let (os, ot) = (t.output_view(&s).unwrap(), t.output_view(&big).unwrap());
                if !os.leq(&ot).unwrap() {
                    return Err(format!(
                        "{}: output shrank from\n{}to\n{}",
                        e.name,
                        os.to_fact_text(),
                        ot.to_fact_text()
                    ));
                }
                pairs += 1;
            }
        }
    }
    let gc = entry("gc");
    let t = transducer(gc);
    let all: Vec<Fact> = input(gc, gc.fixture("gc-remote-refs").unwrap()).facts().collect();
    let mut random_violations = 0;
    for _ in 0..20 {
        let (s, big) = subset_pair(&all, &mut rng);
        if !t.output_view(&s).unwrap().leq(&t.output_view(&big).unwrap()).unwrap() {
            random_violations += 1;
        }
    }
    let s = Database::from_facts(facts(&["object(O4)", "object(O6)", "ref(O6, O5)", "root(Root)", "ref(Root, O1)"]))
        .unwrap();
    let mut big = s.clone();
    for f in facts(&["ref(O1, O3)", "ref(O3, O4)"]) {
        big.insert(f).unwrap();
    }
    let (os, ot) = (t.output_view(&s).unwrap(), t.output_view(&big).unwrap());
    let o4: Fact = "garbage(O4)".parse().unwrap();
    if os.leq(&ot).unwrap() || !os.contains(&o4) || ot.contains(&o4) {
        return Err("gc pair did not drop garbage(O4)".into());
    }
    Ok(format!("{pairs} monotone pairs grow; gc violates on the O4 pair and on {random_violations}/20 random pairs"))
}

fn elems() -> impl Strategy<Value = BTreeSet<Value>> {
    prop::collection::btree_set(prop::sample::select(vec!["a", "b", "c", "d", "e"]).prop_map(Value::sym), 0..4)
}

fn variant(k: usize) -> BoxedStrategy<LatticeValue> {
    match k {
        0 => elems().prop_map(LatticeValue::GSet).boxed(),
        1 => (-20i64..20).prop_map(LatticeValue::MaxInt).boxed(),
        2 => any::<bool>().prop_map(LatticeValue::BoolOr).boxed(),
        _ => {
            (elems(), elems()).prop_map(|(a, t)| LatticeValue::TwoPSet(TwoPhaseSet { added: a, tombstoned: t })).boxed()
        }
    }
}

fn criterion_6() -> Outcome {
    let cases = 256;
    for k in 0..4 {
        let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
        let v = variant(k);
        runner
            .run(&(v.clone(), v.clone(), v), |(a, b, c)| {
                let ab = merge(&a, &b).unwrap();
                prop_assert_eq!(&ab, &merge(&b, &a).unwrap());
                prop_assert_eq!(merge(&ab, &c).unwrap(), merge(&a, &merge(&b, &c).unwrap()).unwrap());
                prop_assert_eq!(merge(&a, &a).unwrap(), a.clone());
                prop_assert!(a.leq(&ab).unwrap() && b.leq(&ab).unwrap());
                Ok(())
            })
            .map_err(|e| format!("variant {k}: {e}"))?;
    }
    let mut runner = TestRunner::new(Config { cases: 128, failure_persistence: None, ..Config::default() });
    runner
        .run(&(0usize..4).prop_flat_map(|k| (prop::collection::vec(variant(k), 1..8), any::<u64>())), |(ups, seed)| {
            let mut other = ups.clone();
            other.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let fold = |xs: &[LatticeValue]| xs[1..].iter().fold(xs[0].clone(), |acc, x| merge(&acc, x).unwrap());
            prop_assert_eq!(fold(&ups), fold(&other));
            Ok(())
        })
        .map_err(|e| format!("replica convergence: {e}"))?;
    Ok(format!("ACI + inflation over {cases} cases x 4 variants; convergence over 128 permutation pairs"))
}

fn criterion_7() -> Outcome {
    let mut runs = 0;
    for e in corpus::entries() {
        let s = e.session().map_err(|x| x.to_string())?;
        let net = init_network(&s.transducer, &s.input, &s.partitioning().map_err(|x| x.to_string())?)
            .map_err(|x| x.to_string())?;
        for seed in [s.config.seed, 1, 99] {
            for duplicate_every in [None, Some(2)] {
                let opts = RunOptions { duplicate_every, ..s.config.run_options() };
                let first = run_schedule(&net, &Schedule::Seed(seed), opts).unwrap().canonical_json();
                for _ in 0..2 {
                    if run_schedule(&net, &Schedule::Seed(seed), opts).unwrap().canonical_json() != first {
                        return Err(format!("{} seed {seed} is not reproducible", e.name));
                    }
                }
                runs += 3;
            }
        }
    }
    Ok(format!("{runs} runs byte-identical across 3 repetitions"))
}

fn criterion_8() -> Outcome {
    let mut divergent_programs = BTreeSet::new();
    let mut instances = 0;
    for e in corpus::entries() {
        let program = e.program().map_err(|x| x.to_string())?;
        let monotone = analyze_program(&program).monotone;
        let t = transducer(e);
        let config = e.config().map_err(|x| x.to_string())?;
        for f in e.fixtures {
            let db = input(e, f);
            let mut parts: Vec<Partitioning> = Vec::new();
            if f.expected.contains(&Expected::DivergentUnderConfig)
                || f.expected.contains(&Expected::ConfluentUnderConfig)
            {
                parts.push(e.session().unwrap().partitioning().unwrap());
            }
            for m in 2..=config.machines.max(2) {
                parts.extend(enumerate_partitionings(&db, m, 6, 8));
            }
            for part in parts {
                let opts = if monotone || db.len() <= 4 {
                    CheckOptions { state_bound: 200_000, ..CheckOptions::default() }
                } else {
                    CheckOptions { mode: Mode::Sampled, samples: 32, ..CheckOptions::default() }
                };
                let v = check_confluence(&t, &db, &part, opts).map_err(|x| x.to_string())?;
                instances += 1;
                if v.outcome == ConfluenceOutcome::Divergent {
                    if monotone {
                        return Err(format!("{} is labelled monotone but diverges on {}", e.name, f.name));
                    }
                    divergent_programs.insert(e.name);
                }
            }
        }
    }
    Ok(format!("{instances} instances; divergence only in non-monotone programs {:?}", divergent_programs))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("static/dynamic agreement on monotone corpus", criterion_1),
        ("non-monotone divergence witnesses", criterion_2),
        ("reference scenario outputs", criterion_3),
        ("coordination detection", criterion_4),
        ("monotonicity under input growth", criterion_5),
        ("lattice laws", criterion_6),
        ("determinism", criterion_7),
        ("analyzer conservativeness", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
