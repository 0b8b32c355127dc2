//! Config-driven experiment runner over the core sampling library.

pub mod checks;
pub mod commands;
pub mod config;
pub mod output;
