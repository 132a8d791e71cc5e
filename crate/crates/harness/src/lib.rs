//! Experiment harness for the generative neural annealer: instance
//! generation, batch runs with manifests, aggregate reports and attention
//! analysis.

use std::path::{Path, PathBuf};

use gna_core::analysis::AnalysisError;
use gna_core::model::ModelError;
use gna_core::problems::ProblemError;
use thiserror::Error;

pub mod analyze;
pub mod experiment;
pub mod plot;
pub mod report;
pub mod runner;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{0} run(s) failed")]
    RunsFailed(usize),
}

impl HarnessError {
    /// 2 for usage errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}
