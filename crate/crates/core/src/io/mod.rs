//! Configuration files, initial data, and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod init;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader};
pub use config::{InitialMode, InitialSpec, RunConfig};
pub use init::{generate_initial, smallness, InitialData};
