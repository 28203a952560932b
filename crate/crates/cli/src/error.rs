use std::path::PathBuf;

use thiserror::Error;

/// Failure classes, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<rqvol::Error> for CliError {
    fn from(e: rqvol::Error) -> Self {
        use rqvol::Error::*;
        let msg = e.to_string();
        match e {
            InvalidSession(_) | InvalidArgument(_) | UnknownSpec { .. } | SpecParse { .. } | MissingImpliedVol
            | MultiStepRefused(_) => CliError::Config(msg),
            RankDeficientDesign { .. }
            | NonConvergence { .. }
            | BootstrapFailure { .. }
            | ExplosivePath(_)
            | AllStartsFailed
            | NoStableRegion
            | NonFiniteLikelihood
            | OptimizerDivergence(_)
            | RootBracketFailure(_)
            | RootFailure(_)
            | DegenerateVariance => CliError::Numerical(msg),
            _ => CliError::Data(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
