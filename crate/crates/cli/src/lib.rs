//! Experiment runner for the `numdiff` differentiators: TOML configs,
//! signal generation, comparison sweeps and single-file differentiation.

pub mod config;
pub mod engine;
