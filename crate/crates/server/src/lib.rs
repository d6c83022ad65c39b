//! Session service and command-line front end.

pub mod cli;
pub mod config;
pub mod http;
pub mod wire;
