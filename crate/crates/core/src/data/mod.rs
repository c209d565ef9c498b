//! Trajectories, the dataset file format, hindsight relabeling, input
//! normalization and window sampling.

mod format;
mod norm;
mod relabel;
mod trajectory;
mod window;

use std::path::PathBuf;

pub use format::{
    file_has_provenance, load_dataset, load_dataset_with, read_task_registry, sidecar_path,
    to_jsonl, write_dataset,
};
pub use norm::{NormStats, MIN_STD};
pub use relabel::hindsight_relabel;
pub use trajectory::{Dataset, Provenance, TaskRegistry, TaskSpec, Trajectory};
pub use window::{sample_window, Window, WindowSampler};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("task sidecar {path}: {msg}")]
    Sidecar { path: PathBuf, msg: String },
    #[error("unknown task_id {0}")]
    UnknownTask(String),
    #[error("invalid spec for task {task}: {msg}")]
    InvalidTaskSpec { task: String, msg: String },
    #[error("trajectory {index}: {msg}")]
    Invalid { index: usize, msg: String },
    #[error("dataset already contains relabeled trajectories")]
    AlreadyAugmented,
    #[error("dataset is empty")]
    Empty,
    #[error("{0}")]
    Config(String),
}
