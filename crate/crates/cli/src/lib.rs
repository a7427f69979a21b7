//! Library side of the `cfloss` command-line tool.

pub mod config;
pub mod gradcheck;
pub mod report;
