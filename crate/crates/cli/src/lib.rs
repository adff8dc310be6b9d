//! Problem-file language and command layer for the amalgamated free product
//! calculator.

// Errors carry the exact values that caused them.
#![allow(clippy::result_large_err)]

pub mod commands;
pub mod demo;
pub mod error;
pub mod parse;
pub mod problem;
pub mod report;

pub use commands::run;
pub use error::CliError;
pub use parse::parse_problem;
pub use problem::{Problem, ProblemFile};
