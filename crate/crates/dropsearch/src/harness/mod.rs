//! Pipeline driver: configuration, dataset ingestion, persistence, and the
//! CLI-facing commands.

pub mod checkpoint;
pub mod config;
pub mod idx;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use config::RunConfig;
pub use idx::load_idx;
pub use pipeline::{cmd_enumerate, cmd_eval, cmd_latency_fit, cmd_search, cmd_train, ArtifactPaths};
