//! Configuration, subcommands and run manifests for the `ekw` binary.

pub mod commands;
pub mod config;
pub mod manifest;

pub use config::RunConfig;
