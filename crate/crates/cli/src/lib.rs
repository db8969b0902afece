//! File formats, reports and batch commands on top of `mono3d-core`.

pub mod commands;
pub mod kitti;
pub mod oracle;
pub mod report;

pub use commands::{run, CliError, Command, RunConfig};
