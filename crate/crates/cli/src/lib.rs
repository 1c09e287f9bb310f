//! Command-line experiments over the `cohortsift` library.

pub mod commands;
pub mod config;
