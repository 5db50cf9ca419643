//! Command-line front end of the stagflow schemes.

pub mod commands;
pub mod config;
