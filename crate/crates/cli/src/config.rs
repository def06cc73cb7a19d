//! Run configuration files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use calmlab::calmlang::{parse_program, validate_program, ValidatedProgram};
use calmlab::netsim::{Partitioning, RunOptions};
use calmlab::relspace::{parse_facts, Database, Fact};
use calmlab::transducer::Transducer;
use calmlab::verdicts::{CheckOptions, CoordinationOptions, Mode, DEFAULT_PARTITION_CAP, DEFAULT_SAMPLES};
use serde::Deserialize;

use crate::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
const DEFAULT_DUPLICATE_EVERY: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PartitionSpec {
    #[default]
    Colocated,
    Hash,
    Explicit(BTreeMap<String, Vec<String>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub program: PathBuf,
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    #[serde(default = "one")]
    pub machines: usize,
    #[serde(default)]
    pub partitioning: PartitionSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub step_budget: Option<usize>,
    #[serde(default)]
    pub duplicate: bool,
    #[serde(default)]
    pub duplicate_every: Option<usize>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub state_bound: Option<usize>,
    #[serde(default)]
    pub partition_cap: Option<usize>,
}

fn one() -> usize {
    1
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        if cfg.machines == 0 {
            return Err(CliError::Config("machines must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn run_options(&self) -> RunOptions {
        let default = RunOptions::default();
        RunOptions {
            step_budget: self.step_budget.unwrap_or(default.step_budget),
            duplicate_every: self.duplicate.then(|| self.duplicate_every.unwrap_or(DEFAULT_DUPLICATE_EVERY)),
        }
    }

    pub fn check_options(&self) -> CheckOptions {
        let default = CheckOptions::default();
        CheckOptions {
            mode: self.mode,
            samples: self.samples.unwrap_or(DEFAULT_SAMPLES),
            seed: self.seed,
            state_bound: self.state_bound.unwrap_or(default.state_bound),
            run: self.run_options(),
        }
    }

    pub fn coordination_options(&self) -> CoordinationOptions {
        CoordinationOptions {
            samples: self.samples.unwrap_or(DEFAULT_SAMPLES),
            seed: self.seed,
            partition_cap: self.partition_cap.unwrap_or(DEFAULT_PARTITION_CAP),
            run: self.run_options(),
        }
    }
}

/// Everything a verb needs: the compiled program, its input and placement.
#[derive(Debug, Clone)]
pub struct Session {
    pub config: RunConfig,
    pub program: ValidatedProgram,
    pub transducer: Transducer,
    pub input: Database,
}

impl Session {
    /// Builds a session from sources already in memory.
    pub fn from_sources(config: RunConfig, program_src: &str, fixture_src: Option<&str>) -> Result<Session, CliError> {
        Session::build(config, load_program_source(program_src)?, fixture_src)
    }

    fn build(config: RunConfig, program: ValidatedProgram, fixture_src: Option<&str>) -> Result<Session, CliError> {
        let transducer = Transducer::new(program.clone()).map_err(|e| CliError::Program(e.to_string()))?;
        let input = match fixture_src {
            Some(src) => load_fixture_source(&program, src)?,
            None => Database::new(),
        };
        Ok(Session { config, program, transducer, input })
    }

    /// Reads a config file; program and fixture paths are relative to it.
    pub fn load(path: &Path) -> Result<Session, CliError> {
        let config = RunConfig::from_json(&read(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let program = load_program_file(&dir.join(&config.program))?;
        let fixture_src = match &config.fixture {
            Some(f) => Some(read(&dir.join(f))?),
            None => None,
        };
        Session::build(config, program, fixture_src.as_deref())
    }

    pub fn partitioning(&self) -> Result<Partitioning, CliError> {
        let m = self.config.machines;
        let part = match &self.config.partitioning {
            PartitionSpec::Colocated => Partitioning::colocated(&self.input, m, 0),
            PartitionSpec::Hash => Partitioning::hash(&self.input, m),
            PartitionSpec::Explicit(placement) => {
                let mut parsed: BTreeMap<String, Vec<Fact>> = BTreeMap::new();
                for (machine, facts) in placement {
                    let list = facts
                        .iter()
                        .map(|f| f.parse::<Fact>().map_err(|e| CliError::Config(format!("placement fact `{f}`: {e}"))))
                        .collect::<Result<Vec<_>, _>>()?;
                    parsed.insert(machine.clone(), list);
                }
                Partitioning::explicit(&self.input, m, &parsed)
            }
        };
        part.map_err(|e| CliError::Config(e.to_string()))
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn load_program_source(src: &str) -> Result<ValidatedProgram, CliError> {
    let program = parse_program(src).map_err(|e| CliError::Program(e.to_string()))?;
    validate_program(program).map_err(|e| CliError::Program(e.to_string()))
}

/// Like [`load_program_source`], with every diagnostic line prefixed by
/// `file:`.
pub fn load_program_file(path: &Path) -> Result<ValidatedProgram, CliError> {
    load_program_source(&read(path)?).map_err(|e| match e {
        CliError::Program(msg) => {
            CliError::Diagnostics(msg.lines().map(|l| format!("{}:{l}", path.display())).collect::<Vec<_>>().join("\n"))
        }
        other => other,
    })
}

/// Parses a fixture and checks each fact against the program's input
/// relations.
pub fn load_fixture_source(program: &ValidatedProgram, src: &str) -> Result<Database, CliError> {
    let facts = parse_facts(src).map_err(|e| CliError::Fixture(e.to_string()))?;
    for f in &facts {
        program.check_input_fact(f).map_err(|e| CliError::Fixture(e.to_string()))?;
    }
    Database::from_facts(facts).map_err(|e| CliError::Fixture(e.to_string()))
}
