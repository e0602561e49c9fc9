//! Experiment harness on top of the `interlacement` crate.

pub mod config;
pub mod experiments;
pub mod report;
