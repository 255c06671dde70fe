//! Feature stores, experiment runs and reports on top of `ranpac-core`.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod report;
pub mod store;
