use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, sha256_file, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the work directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub outputs: Vec<OutputRecord>,
    /// Unix seconds.
    pub completed_at: u64,
}

/// Summary of the generation journal, which holds the per-combination
/// status.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStatus {
    pub journal: String,
    pub planned: usize,
    pub done: usize,
    pub skipped: usize,
    pub resumed: usize,
    pub backend_calls: usize,
    pub interrupted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    pub stages: BTreeMap<String, StageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationStatus>,
}

pub(crate) fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(config_hash: &str) -> Self {
        RunManifest {
            run_id: format!("{}-{}", unix_now(), &config_hash[..12.min(config_hash.len())]),
            config_hash: config_hash.to_string(),
            stages: BTreeMap::new(),
            generation: None,
        }
    }

    pub fn path(workdir: &Path) -> PathBuf {
        workdir.join(MANIFEST_FILE)
    }

    pub fn load(workdir: &Path) -> Result<Option<Self>> {
        let p = Self::path(workdir);
        if p.exists() {
            read_json(&p).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn save(&self, workdir: &Path) -> Result<()> {
        write_json(&Self::path(workdir), self)
    }

    /// Records a completed stage with checksums of its outputs.
    pub fn complete(&mut self, workdir: &Path, stage: &str, outputs: &[&str]) -> Result<()> {
        let outputs = outputs
            .iter()
            .map(|p| {
                Ok(OutputRecord {
                    path: p.to_string(),
                    sha256: sha256_file(&workdir.join(p))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                outputs,
                completed_at: unix_now(),
            },
        );
        Ok(())
    }

    /// Ok when `stage` is marked complete and its outputs still match.
    pub fn verify(&self, workdir: &Path, stage: &str, required_by: &str) -> Result<()> {
        let rec = self.stages.get(stage).ok_or_else(|| Error::Prerequisite {
            stage: required_by.to_string(),
            missing: stage.to_string(),
        })?;
        for out in &rec.outputs {
            let p = workdir.join(&out.path);
            let stale = !p.exists() || sha256_file(&p)? != out.sha256;
            if stale {
                return Err(Error::StaleOutput {
                    stage: stage.to_string(),
                    path: p,
                });
            }
        }
        Ok(())
    }
}

/// Exclusive ownership of a work directory, released on drop.
#[derive(Debug)]
pub struct WorkdirLock {
    path: PathBuf,
}

impl WorkdirLock {
    /// Takes the lock. A lock left by a process that no longer exists is
    /// reclaimed where the platform exposes `/proc`.
    pub fn acquire(workdir: &Path) -> Result<Self> {
        let path = workdir.join(LOCK_FILE);
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    writeln!(f, "{}", std::process::id()).map_err(|e| Error::io(&path, e))?;
                    return Ok(WorkdirLock { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if !holder_is_gone(&path) {
                        return Err(Error::Locked(workdir.to_path_buf()));
                    }
                    log::warn!("removing stale lock {}", path.display());
                    let _ = fs::remove_file(&path);
                }
                Err(e) => return Err(Error::io(&path, e)),
            }
        }
        Err(Error::Locked(workdir.to_path_buf()))
    }
}

fn holder_is_gone(lock: &Path) -> bool {
    let proc = Path::new("/proc");
    if !proc.is_dir() {
        return false;
    }
    match fs::read_to_string(lock).ok().and_then(|s| s.trim().parse::<u32>().ok()) {
        Some(pid) => !proc.join(pid.to_string()).exists(),
        None => false,
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let held = WorkdirLock::acquire(dir.path()).unwrap();
        assert!(matches!(WorkdirLock::acquire(dir.path()), Err(Error::Locked(_))));
        drop(held);
        WorkdirLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn verify_detects_missing_and_modified_outputs() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.json"), "1").unwrap();
        let mut m = RunManifest::new("abc");
        let err = m.verify(dir.path(), "ingest", "cluster").unwrap_err();
        assert!(err.to_string().contains("`ingest`"));
        m.complete(dir.path(), "ingest", &["a.json"]).unwrap();
        m.verify(dir.path(), "ingest", "cluster").unwrap();
        fs::write(dir.path().join("a.json"), "2").unwrap();
        assert!(matches!(
            m.verify(dir.path(), "ingest", "cluster"),
            Err(Error::StaleOutput { .. })
        ));
    }
}
