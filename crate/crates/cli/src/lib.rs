//! Experiment harness around the core library.
//!
//! Every run follows the same contract: a JSON config names an experiment
//! kind and its parameters, all outputs land in one directory, and a
//! manifest records the effective config plus a SHA-256 hash of every file
//! written. Identical (config, seed) must reproduce identical hashes, so
//! nothing here may depend on time, machine identity, or iteration order of
//! anything unordered.

pub mod config;
pub mod manifest;
pub mod plot;
pub mod runner;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Config rejected; the message names the offending field.
    #[error("config field {field}: {problem}")]
    Config { field: String, problem: String },
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid JSON: {problem}")]
    Json { path: String, problem: String },
    #[error("checkpoint {path}: {problem}")]
    Checkpoint { path: String, problem: String },
    #[error("plot needs at least one nonempty series")]
    EmptyPlot,
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// One wrapper so runner code can use `?` on any core-library error.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Matrix(#[from] minka_core::matrix::MatrixError),
    #[error(transparent)]
    Exterior(#[from] minka_core::exterior::ExteriorError),
    #[error(transparent)]
    Nn(#[from] minka_core::nn::NnError),
    #[error(transparent)]
    McTrain(#[from] minka_core::mctrain::McTrainError),
    #[error(transparent)]
    Ka(#[from] minka_core::ka::KaError),
}

impl From<minka_core::matrix::MatrixError> for CliError {
    fn from(e: minka_core::matrix::MatrixError) -> Self {
        CliError::Core(CoreError::Matrix(e))
    }
}

impl From<minka_core::exterior::ExteriorError> for CliError {
    fn from(e: minka_core::exterior::ExteriorError) -> Self {
        CliError::Core(CoreError::Exterior(e))
    }
}

impl From<minka_core::nn::NnError> for CliError {
    fn from(e: minka_core::nn::NnError) -> Self {
        CliError::Core(CoreError::Nn(e))
    }
}

impl From<minka_core::mctrain::McTrainError> for CliError {
    fn from(e: minka_core::mctrain::McTrainError) -> Self {
        CliError::Core(CoreError::McTrain(e))
    }
}

impl From<minka_core::ka::KaError> for CliError {
    fn from(e: minka_core::ka::KaError) -> Self {
        CliError::Core(CoreError::Ka(e))
    }
}

impl CliError {
    pub fn config(field: impl Into<String>, problem: impl Into<String>) -> CliError {
        CliError::Config { field: field.into(), problem: problem.into() }
    }
}
