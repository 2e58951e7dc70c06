//! Library surface of the command-line tool: experiment configurations,
//! CSV assembly, and the command implementations.

pub mod commands;
pub mod config;
pub mod csvout;
