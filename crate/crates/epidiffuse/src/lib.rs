//! Configuration, persistence and subcommands for the `epidiffuse` binary.

pub mod commands;
pub mod config;
pub mod convergence;
pub mod output;
