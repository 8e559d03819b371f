//! Staged orchestration over a work directory.
//!
//! Each stage reads the files written by its prerequisites and writes its
//! own outputs atomically. `manifest.json` records completed stages with
//! output checksums and the config hash; a lock file gives one run
//! exclusive use of the directory.

mod config;
mod manifest;
mod services;
mod stages;

pub use config::{ClientsConfig, PathsConfig, PipelineConfig};
pub use manifest::{GenerationStatus, OutputRecord, RunManifest, StageRecord, WorkdirLock, LOCK_FILE, MANIFEST_FILE};
pub use services::Services;
pub use stages::*;
