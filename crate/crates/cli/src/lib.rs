//! Command-line front end for `nou-amm`: series ingestion, run configuration
//! and the `nou-amm` binary's subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
