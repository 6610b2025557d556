//! Batch driver for the jumpdiff experiments: config parsing, pipelines and
//! CSV/JSON reports. The `jumpdiff` binary is a thin wrapper over [`cli`].

pub mod cli;
pub mod config;
pub mod pipelines;
pub mod report;
