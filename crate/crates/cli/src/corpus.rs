//! The bundled corpus: programs, fixtures, run configs and expected verdicts.

use calmlab::calmlang::ValidatedProgram;
use calmlab::relspace::Database;
use serde::Serialize;

use crate::config::{load_fixture_source, load_program_source, RunConfig, Session};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expected {
    /// Confluent on every partitioning the acceptance matrix explores.
    ConfluentEverywhere,
    /// Confluent under the entry's run config placement.
    ConfluentUnderConfig,
    /// Divergent under the entry's run config placement.
    DivergentUnderConfig,
    CoordinationFree,
    CoordinationRequired,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Fixture {
    pub name: &'static str,
    pub file: &'static str,
    #[serde(skip)]
    pub source: &'static str,
    pub expected: &'static [Expected],
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CorpusEntry {
    pub name: &'static str,
    pub program_file: &'static str,
    #[serde(skip)]
    pub program_source: &'static str,
    pub config_file: &'static str,
    #[serde(skip)]
    pub config_source: &'static str,
    pub monotone: bool,
    pub reasons: &'static [&'static str],
    pub fixtures: &'static [Fixture],
}

macro_rules! fixture {
    ($name:literal, [$($e:ident),*]) => {
        Fixture {
            name: $name,
            file: concat!("fixtures/", $name, ".facts"),
            source: include_str!(concat!("../../../corpus/fixtures/", $name, ".facts")),
            expected: &[$(Expected::$e),*],
        }
    };
}

macro_rules! entry {
    ($name:literal, $monotone:literal, [$($r:literal),*], [$($f:expr),* $(,)?]) => {
        CorpusEntry {
            name: $name,
            program_file: concat!($name, ".calm"),
            program_source: include_str!(concat!("../../../corpus/", $name, ".calm")),
            config_file: concat!($name, ".json"),
            config_source: include_str!(concat!("../../../corpus/", $name, ".json")),
            monotone: $monotone,
            reasons: &[$($r),*],
            fixtures: &[$($f),*],
        }
    };
}

static ENTRIES: [CorpusEntry; 8] = [
    entry!(
        "deadlock",
        true,
        [],
        [
            fixture!("deadlock-two-cycles", [ConfluentEverywhere, CoordinationFree]),
            fixture!("deadlock-triangle", [ConfluentEverywhere, CoordinationFree]),
        ]
    ),
    entry!(
        "transitive-closure",
        true,
        [],
        [
            fixture!("links-chain", [ConfluentEverywhere, CoordinationFree]),
            fixture!("links-diamond", [ConfluentEverywhere, CoordinationFree]),
        ]
    ),
    entry!(
        "cart-two-set",
        true,
        [],
        [
            fixture!("cart-concurrent", [ConfluentEverywhere, CoordinationFree]),
            fixture!("cart-mixed", [ConfluentEverywhere, CoordinationFree]),
        ]
    ),
    entry!("tombstone-demo", true, [], [fixture!("tombstones", [ConfluentEverywhere, CoordinationFree])]),
    entry!("gc", false, ["negation"], [fixture!("gc-remote-refs", [DivergentUnderConfig])]),
    entry!(
        "gc-coordinated",
        false,
        ["membership-query", "negation"],
        [
            fixture!("gc-remote-refs", [ConfluentUnderConfig, CoordinationRequired]),
            fixture!("gc-small", [CoordinationRequired]),
        ]
    ),
    entry!("cart-naive", false, ["event-join", "negation"], [fixture!("cart-concurrent", [DivergentUnderConfig])]),
    entry!(
        "cart-manifest",
        false,
        ["aggregation", "event-join", "negation"],
        [fixture!("cart-checkout", [ConfluentUnderConfig]),]
    ),
];

pub fn entries() -> &'static [CorpusEntry] {
    &ENTRIES
}

pub fn entry(name: &str) -> Option<&'static CorpusEntry> {
    ENTRIES.iter().find(|e| e.name == name)
}

impl CorpusEntry {
    pub fn program(&self) -> Result<ValidatedProgram, CliError> {
        load_program_source(self.program_source)
    }

    pub fn fixture(&self, name: &str) -> Option<&'static Fixture> {
        self.fixtures.iter().find(|f| f.name == name)
    }

    pub fn input(&self, fixture: &Fixture) -> Result<Database, CliError> {
        load_fixture_source(&self.program()?, fixture.source)
    }

    pub fn config(&self) -> Result<RunConfig, CliError> {
        RunConfig::from_json(self.config_source)
    }

    /// The entry's run config with its own fixture, from embedded sources.
    pub fn session(&self) -> Result<Session, CliError> {
        let config = self.config()?;
        let fixture = config
            .fixture
            .as_ref()
            .and_then(|p| self.fixtures.iter().find(|f| p.to_str() == Some(f.file)))
            .map(|f| f.source);
        Session::from_sources(config, self.program_source, fixture)
    }
}
