//! File formats, external generator transports, parallel batches and the
//! `todsim` command line on top of `todsim-core`.

pub mod batch;
pub mod cli;
pub mod config;
pub mod error;
pub mod external;
pub mod io;
pub mod users;
