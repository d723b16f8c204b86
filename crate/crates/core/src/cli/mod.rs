//! Batch front end: configuration parsing, task orchestration, grid files,
//! rasters and run manifests.

pub mod config;
pub mod grid_io;
pub mod manifest;
pub mod pgm;
pub mod run;

pub use config::{ConfigError, RunConfig};
pub use grid_io::Grid;
pub use manifest::RunManifest;
pub use pgm::Scale;
pub use run::{render_file, run_file, run_text, RunError, RunOptions, RunOutcome, CACHE_ENV};
