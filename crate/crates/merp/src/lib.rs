//! Service and command-line front end for the merp pipeline.

pub mod commands;
pub mod server;
