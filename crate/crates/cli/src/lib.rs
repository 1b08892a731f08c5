//! Command implementations behind the `vrange` binary.

pub mod commands;
pub mod config;
pub mod fixtures;
pub mod manifest;

pub use commands::{cmd_analyze, cmd_report, cmd_validate, AnalyzeOutput, ValidationReport};
pub use config::RunConfig;
pub use fixtures::cmd_fixture;
