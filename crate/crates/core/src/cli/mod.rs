//! Scenario runner and operator commands behind the `p2pdeploy` binary.

mod document;
mod runner;
mod scenario;

pub use document::{BundleSummary, DumpEntry, MetricsDocument, NodeLoad, StoreDump};
pub use runner::{generate_payload, Runner};
pub use scenario::{
    CmpOp, Command, LifecycleAction, Operand, Predicate, PublishSpec, Quantity, Scenario,
    ScenarioError, Step, Workload, DEFAULT_PAYLOAD_SIZE,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

pub const SEED_ENV: &str = "P2PDEPLOY_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("assertion failed at command {index} (line {line}): {predicate}; {observed}")]
    Assertion {
        index: usize,
        line: usize,
        predicate: String,
        observed: String,
    },
    #[error("scenario error: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("malformed metrics document: {0}")]
    Document(#[from] serde_json::Error),
    #[error("command {index} (line {line}) `{command}` failed: {message}")]
    Runtime {
        index: usize,
        line: usize,
        command: String,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Assertion { .. } => 1,
            CliError::Scenario(_) | CliError::Document(_) => 2,
            CliError::Runtime { .. } => 3,
            CliError::Io { .. } => 4,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Seed precedence: explicit flag, then environment, then the scenario's
/// own `seed` line, then 0.
pub fn effective_seed(flag: Option<u64>, scenario: &Scenario) -> u64 {
    flag.or(scenario.seed).unwrap_or(0)
}

/// Parses and runs `path`. The document is returned alongside any failure
/// so it can still be written out.
pub fn run_file(
    path: &Path,
    seed: Option<u64>,
) -> Result<(MetricsDocument, Result<(), CliError>), CliError> {
    let text = read(path)?;
    let scenario = Scenario::parse(&text, path.parent())?;
    Ok(run_scenario(&scenario, seed))
}

pub fn run_scenario(
    scenario: &Scenario,
    seed: Option<u64>,
) -> (MetricsDocument, Result<(), CliError>) {
    Runner::new(effective_seed(seed, scenario)).run(scenario)
}

pub fn write_document(doc: &MetricsDocument, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, doc.to_json()).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{}", doc.to_json());
            Ok(())
        }
    }
}

pub fn stats_file(path: &Path) -> Result<String, CliError> {
    let doc = MetricsDocument::from_json(&read(path)?)?;
    Ok(doc.summary())
}
