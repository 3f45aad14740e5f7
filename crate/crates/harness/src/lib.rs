//! Orchestration around `distill-core`: the experiment grid, the survey
//! service and the `distill` command line.

pub mod cli;
pub mod config;
pub mod grid;
pub mod pipeline;
pub mod service;
pub mod survey;
