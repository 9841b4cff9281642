//! Library surface of the experiment runner: configuration, execution, and
//! the subcommand implementations the `lifelab` binary dispatches to.

pub mod commands;
pub mod config;
pub mod experiment;

use std::fmt;

use lifelab::env::GenError;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Generation(GenError),
    Invariant(String),
    Io(std::io::Error),
    Train(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> CliError {
        CliError::Config(msg.into())
    }
    pub fn invariant(msg: impl Into<String>) -> CliError {
        CliError::Invariant(msg.into())
    }
    pub fn io(e: std::io::Error) -> CliError {
        CliError::Io(e)
    }
    pub fn train(e: lifelab::learner::TrainError) -> CliError {
        match e {
            lifelab::learner::TrainError::Gen(g) => CliError::Generation(g),
            other => CliError::Train(other.to_string()),
        }
    }
    pub fn aup(e: lifelab::aup::AupTrainError) -> CliError {
        match e {
            lifelab::aup::AupTrainError::Train(t) => CliError::train(t),
            other => CliError::Config(other.to_string()),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Generation(_) => 3,
            CliError::Invariant(_) => 4,
            CliError::Io(_) | CliError::Train(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Generation(e) => write!(f, "generation failure: {e}"),
            CliError::Invariant(m) => write!(f, "invariant violation: {m}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
            CliError::Train(m) => write!(f, "training error: {m}"),
        }
    }
}

