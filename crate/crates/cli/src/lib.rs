//! Configuration, corpus and report rendering behind the `calmlab` binary.

pub mod config;
pub mod corpus;
pub mod render;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("program: {0}")]
    Program(String),
    /// Program diagnostics already carrying `file:line:col` prefixes.
    #[error("{0}")]
    Diagnostics(String),
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("{0}")]
    Run(String),
}
