//! Campaign driver: configuration, targets, finding archive and reports.

pub mod archive;
pub mod campaign;
pub mod config;
pub mod report;
pub mod target;
