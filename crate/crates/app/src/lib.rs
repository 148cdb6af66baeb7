//! Operational shell around the copilot engine: configuration, session
//! persistence, the REST API and the command line.

pub mod api;
pub mod cli;
pub mod config;
pub mod persist;
