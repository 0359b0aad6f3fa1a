//! Configuration, log files, provenance and figures.

pub mod config;
pub mod csv_log;
pub mod manifest;
pub mod plot;

pub use config::ExperimentConfig;
pub use csv_log::{read_log, read_log_file, write_log, write_log_file};
pub use manifest::RunManifest;
