//! Command-line surface for rubric extraction and diagnostics.
//!
//! Exit codes are a stable contract for scripting: 0 on success, 1 on
//! runtime/backend failure, 2 on input or configuration validation failure.

pub mod commands;
pub mod config;

#[derive(Debug)]
pub enum CliError {
    /// Bad input or configuration: exit code 2.
    Validation(String),
    /// Backend, IO, or pipeline failure at runtime: exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
