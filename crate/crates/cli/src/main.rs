use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use calmlab::monocheck::analyze_program;
use calmlab::netsim::{init_network, run_schedule, Schedule};
use calmlab::verdicts::{check_confluence, detect_coordination, ConfluenceOutcome, CoordinationVerdict, Mode};
use calmlab_cli::config::{load_program_file, Session};
use calmlab_cli::{corpus, render, CliError};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "calmlab",
    version,
    about = "Monotonicity analysis and confluence checking for distributed Datalog programs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a program as monotone or not and list its coordination points.
    Analyze {
        program: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run one seeded schedule and print the outcome.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Write the message trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Compare quiescent outputs across schedules.
    Check {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Look for messages needed under every explored partitioning.
    Coordination {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Inspect the bundled corpus.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// List entries with their expected static verdicts and fixtures.
    List {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    json: bool,
    #[arg(long, env = "CALMLAB_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    machines: Option<usize>,
    /// Steps per run; for exhaustive checks, the scheduler state bound.
    #[arg(long)]
    budget: Option<usize>,
}

impl Common {
    fn session(&self, path: &Path) -> Result<Session, CliError> {
        let mut s = Session::load(path)?;
        if let Some(seed) = self.seed {
            s.config.seed = seed;
        }
        if let Some(m) = self.machines {
            if m == 0 {
                return Err(CliError::Config("machines must be at least 1".into()));
            }
            s.config.machines = m;
        }
        Ok(s)
    }
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
    } else {
        print!("{}", text());
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Analyze { program, json } => {
            let p = load_program_file(&program)?;
            let report = analyze_program(&p);
            emit(json, &report, || render::analysis(&report));
            Ok(ExitCode::from(if report.monotone { 0 } else { 1 }))
        }
        Command::Run { config, common, trace } => {
            let mut s = common.session(&config)?;
            if let Some(b) = common.budget {
                s.config.step_budget = Some(b);
            }
            let net = init_network(&s.transducer, &s.input, &s.partitioning()?).map_err(run_err)?;
            let outcome =
                run_schedule(&net, &Schedule::Seed(s.config.seed), s.config.run_options()).map_err(run_err)?;
            if let Some(path) = trace {
                fs::write(&path, outcome.trace_jsonl())
                    .map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })?;
            }
            emit(common.json, &outcome, || render::run(&outcome));
            Ok(ExitCode::from(if outcome.quiesced { 0 } else { 2 }))
        }
        Command::Check { config, common, mode, samples } => {
            let mut s = common.session(&config)?;
            if let Some(m) = mode {
                s.config.mode = m;
            }
            if samples.is_some() {
                s.config.samples = samples;
            }
            if let Some(b) = common.budget {
                match s.config.mode {
                    Mode::Exhaustive => s.config.state_bound = Some(b),
                    Mode::Sampled => s.config.step_budget = Some(b),
                }
            }
            let v = check_confluence(&s.transducer, &s.input, &s.partitioning()?, s.config.check_options())
                .map_err(run_err)?;
            emit(common.json, &v, || render::confluence(&v));
            Ok(ExitCode::from(match v.outcome {
                ConfluenceOutcome::ConfluentOnInstance => 0,
                ConfluenceOutcome::Divergent => 1,
                ConfluenceOutcome::Inconclusive => 2,
            }))
        }
        Command::Coordination { config, common, samples } => {
            let mut s = common.session(&config)?;
            if samples.is_some() {
                s.config.samples = samples;
            }
            if let Some(b) = common.budget {
                s.config.step_budget = Some(b);
            }
            let r = detect_coordination(&s.transducer, &s.input, s.config.machines, s.config.coordination_options())
                .map_err(run_err)?;
            emit(common.json, &r, || render::coordination(&r));
            Ok(ExitCode::from(match r.verdict {
                CoordinationVerdict::CoordinationFreeOnInstance => 0,
                CoordinationVerdict::CoordinationRequiredOnInstance => 1,
                CoordinationVerdict::Inconclusive => 2,
            }))
        }
        Command::Corpus { command: CorpusCommand::List { json } } => {
            let entries = corpus::entries();
            emit(json, &entries, || render::corpus_list(entries));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
