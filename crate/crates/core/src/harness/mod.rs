//! Experiment configuration, baselines, oracle, outputs and CLI.

pub mod benchmark;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod oracle;
pub mod output;
