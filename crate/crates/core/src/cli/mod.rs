pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod idx;
pub mod output;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use commands::{execute, load_data, read_idx_dataset, run_command, CliFailure};
pub use config::{ConfigError, ExperimentConfig};
pub use idx::IdxError;
