//! Scenario-driven front end for the weak IMCF library: runs line and tree
//! flows, neck constructions and bound checks, audits the resulting traces
//! and writes CSV artifacts.

pub mod output;
pub mod runner;
pub mod scenario;

use thiserror::Error;

/// Problems with the configuration or inputs; these map to exit code 2.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("invalid input: {0}")]
    Input(String),
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
