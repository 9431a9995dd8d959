//! Server configuration: TOML file plus environment overrides.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! artifact_root = "/var/lib/insertkit"
//!
//! [profiles.gpu]
//! compositor = { kind = "wire", endpoint = "http://gpu:9000" }
//! segmenter = { kind = "wire", endpoint = "http://gpu:9001" }
//! refiner = { kind = "wire", endpoint = "http://gpu:9002" }
//! ```
//!
//! Environment: `INSERTKIT_LISTEN`, `INSERTKIT_ARTIFACT_ROOT`, and
//! `INSERTKIT_PROFILES` (a separate profile-table TOML that replaces the
//! file's `[profiles]`).

use std::path::{Path, PathBuf};

use insertkit::ProfileTable;
use serde::Deserialize;

pub const ENV_LISTEN: &str = "INSERTKIT_LISTEN";
pub const ENV_ARTIFACT_ROOT: &str = "INSERTKIT_ARTIFACT_ROOT";
pub const ENV_PROFILES: &str = "INSERTKIT_PROFILES";

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_ARTIFACT_ROOT: &str = "artifacts";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad config: {0}")]
    Parse(String),
    #[error(transparent)]
    Profiles(#[from] insertkit::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: String,
    pub artifact_root: PathBuf,
    pub profiles: ProfileTable,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: DEFAULT_LISTEN.into(),
            artifact_root: PathBuf::from(DEFAULT_ARTIFACT_ROOT),
            profiles: ProfileTable::default(),
        }
    }
}

#[derive(Deserialize)]
struct FileSettings {
    listen: Option<String>,
    artifact_root: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let settings: FileSettings = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let defaults = Self::default();
        Ok(Self {
            listen: settings.listen.unwrap_or(defaults.listen),
            artifact_root: settings.artifact_root.unwrap_or(defaults.artifact_root),
            profiles: ProfileTable::from_toml(text)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Applies overrides from `lookup` (normally `std::env::var`).
    pub fn with_overrides(mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        if let Some(v) = lookup(ENV_LISTEN) {
            self.listen = v;
        }
        if let Some(v) = lookup(ENV_ARTIFACT_ROOT) {
            self.artifact_root = PathBuf::from(v);
        }
        if let Some(v) = lookup(ENV_PROFILES) {
            self.profiles = ProfileTable::load(&v)?;
        }
        Ok(self)
    }

    pub fn from_env(path: Option<&Path>) -> Result<Self, ConfigError> {
        let base = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        base.with_overrides(|k| std::env::var(k).ok())
    }
}
