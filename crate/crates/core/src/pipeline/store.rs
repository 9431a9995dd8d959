//! On-disk artifact store: one directory per job holding immutable PNG
//! artifacts, the mutable `job.json` record and an append-only `events.log`.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use super::job::CompositionJob;
use super::state::JobState;
use crate::error::{Error, Result};

pub const JOB_FILE: &str = "job.json";
pub const EVENTS_FILE: &str = "events.log";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    #[default]
    Transition,
    /// Review gate passed; `from` and `to` are both the gate state.
    Approval,
}

/// One line of `events.log`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub timestamp: chrono::DateTime<chrono::Utc>,
    #[serde(default)]
    pub kind: EventKind,
    pub from: Option<JobState>,
    pub to: JobState,
    pub cause: String,
}

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && !key.starts_with('.')
        && key.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl ArtifactStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn job_dir(&self, id: &str) -> Result<PathBuf> {
        if !valid_id(id) {
            return Err(Error::NotFound(format!("job {id}")));
        }
        Ok(self.root.join(id))
    }

    pub fn create_job_dir(&self, id: &str) -> Result<PathBuf> {
        let dir = self.job_dir(id)?;
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    /// Writes a new immutable artifact for `name` and returns its key.
    ///
    /// The first generation is stored as `<name>.png`, later ones as
    /// `<name>.<n>.png`; existing keys are never overwritten.
    pub fn put_artifact(&self, id: &str, name: &str, bytes: &[u8]) -> Result<String> {
        let dir = self.job_dir(id)?;
        for generation in 1u32.. {
            let key = if generation == 1 {
                format!("{name}.png")
            } else {
                format!("{name}.{generation}.png")
            };
            let path = dir.join(&key);
            if path.exists() {
                continue;
            }
            let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
            tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
            tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
            match tmp.persist_noclobber(&path) {
                Ok(_) => return Ok(key),
                Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(Error::io(&path, e.error)),
            }
        }
        unreachable!("u32 generations exhausted")
    }

    pub fn read_artifact(&self, id: &str, key: &str) -> Result<Vec<u8>> {
        if !valid_key(key) {
            return Err(Error::NotFound(format!("artifact {key}")));
        }
        let path = self.job_dir(id)?.join(key);
        fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(format!("artifact {key} of job {id}")),
            _ => Error::io(&path, e),
        })
    }

    /// Atomically replaces `job.json`.
    pub fn save_job(&self, job: &CompositionJob) -> Result<()> {
        let dir = self.create_job_dir(&job.id)?;
        let path = dir.join(JOB_FILE);
        let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
        serde_json::to_writer_pretty(&mut tmp, job)?;
        tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(())
    }

    pub fn load_job(&self, id: &str) -> Result<CompositionJob> {
        let path = self.job_dir(id)?.join(JOB_FILE);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(format!("job {id}")),
            _ => Error::io(&path, e),
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn job_ids(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))? {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            if entry.path().join(JOB_FILE).is_file() {
                if let Some(name) = entry.file_name().to_str() {
                    ids.push(name.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn append_event(&self, id: &str, event: &Event) -> Result<()> {
        let path = self.create_job_dir(id)?.join(EVENTS_FILE);
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        f.write_all(&line).map_err(|e| Error::io(&path, e))
    }

    pub fn read_events(&self, id: &str) -> Result<Vec<Event>> {
        let path = self.job_dir(id)?.join(EVENTS_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&path, e)),
        };
        text.lines()
            .filter(|l| !l.is_empty())
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect()
    }
}

/// Per-job single-writer locks.
#[derive(Debug, Clone, Default)]
pub struct JobLocks {
    held: Arc<Mutex<HashSet<String>>>,
}

/// Releases the job lock on drop.
#[derive(Debug)]
pub struct JobGuard {
    id: String,
    held: Arc<Mutex<HashSet<String>>>,
}

impl JobLocks {
    /// Takes the writer lock for `id`, failing with [`Error::Busy`] if held.
    pub fn try_lock(&self, id: &str) -> Result<JobGuard> {
        let mut held = self.held.lock().expect("lock registry poisoned");
        if !held.insert(id.to_string()) {
            return Err(Error::Busy(id.to_string()));
        }
        Ok(JobGuard {
            id: id.to_string(),
            held: Arc::clone(&self.held),
        })
    }
}

impl JobGuard {
    pub fn id(&self) -> &str {
        &self.id
    }
}

impl Drop for JobGuard {
    fn drop(&mut self) {
        if let Ok(mut held) = self.held.lock() {
            held.remove(&self.id);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifacts_are_write_once_with_generations() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::open(dir.path()).unwrap();
        store.create_job_dir("j1").unwrap();
        let k1 = store.put_artifact("j1", "i_os", b"one").unwrap();
        let k2 = store.put_artifact("j1", "i_os", b"two").unwrap();
        assert_eq!(k1, "i_os.png");
        assert_eq!(k2, "i_os.2.png");
        assert_eq!(store.read_artifact("j1", &k1).unwrap(), b"one");
        assert_eq!(store.read_artifact("j1", &k2).unwrap(), b"two");
        assert!(matches!(store.read_artifact("j1", "nope.png"), Err(Error::NotFound(_))));
        assert!(matches!(store.read_artifact("j1", "../x"), Err(Error::NotFound(_))));
    }

    #[test]
    fn lock_is_exclusive_until_dropped() {
        let locks = JobLocks::default();
        let g = locks.try_lock("a").unwrap();
        assert!(matches!(locks.try_lock("a"), Err(Error::Busy(_))));
        assert!(locks.try_lock("b").is_ok());
        drop(g);
        assert!(locks.try_lock("a").is_ok());
    }
}
