//! Library side of the `transport-lasso` binary: dataset loading with the
//! standardization record, the versioned map file format, deterministic
//! CSV/JSON writers, and the subcommand implementations.

pub mod commands;
pub mod dataset;
pub mod mapfile;
pub mod output;

pub use dataset::{load_dataset, Dataset, Standardization};
pub use mapfile::MapFile;
