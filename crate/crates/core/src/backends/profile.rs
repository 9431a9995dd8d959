use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::segmenters::DEFAULT_HEURISTIC_THRESHOLD;
use crate::error::{Error, Result};
use crate::masking::{ComponentPolicy, DEFAULT_MARGIN};

pub const DEFAULT_MAX_SIDE: u32 = 1024;
pub const MIN_MAX_SIDE: u32 = 64;
pub const DEFAULT_TIMEOUT_S: f64 = 120.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompositorSelector {
    Mock,
    Wire { endpoint: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmenterSelector {
    Oracle,
    Heuristic {
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    Wire { endpoint: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RefinerSelector {
    Mock,
    Wire { endpoint: String },
}

fn default_threshold() -> f64 {
    DEFAULT_HEURISTIC_THRESHOLD
}
fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_S
}
fn default_max_side() -> u32 {
    DEFAULT_MAX_SIDE
}
fn default_margin() -> u32 {
    DEFAULT_MARGIN
}

/// Which backend serves each stage, plus the knobs the pipeline needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendProfile {
    #[serde(default)]
    pub name: String,
    pub compositor: CompositorSelector,
    pub segmenter: SegmenterSelector,
    pub refiner: RefinerSelector,
    /// Default job seed; mocks are deterministic in it, wire backends receive it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_timeout")]
    pub request_timeout_s: f64,
    #[serde(default = "default_max_side")]
    pub max_side: u32,
    #[serde(default = "default_margin")]
    pub margin: u32,
    #[serde(default)]
    pub policy: ComponentPolicy,
}

impl BackendProfile {
    pub fn mock_oracle() -> Self {
        Self {
            name: "mock-oracle".into(),
            compositor: CompositorSelector::Mock,
            segmenter: SegmenterSelector::Oracle,
            refiner: RefinerSelector::Mock,
            seed: 0,
            request_timeout_s: DEFAULT_TIMEOUT_S,
            max_side: DEFAULT_MAX_SIDE,
            margin: DEFAULT_MARGIN,
            policy: ComponentPolicy::LargestComponent,
        }
    }

    pub fn mock_heuristic() -> Self {
        Self {
            name: "mock-heuristic".into(),
            segmenter: SegmenterSelector::Heuristic {
                threshold: DEFAULT_HEURISTIC_THRESHOLD,
            },
            ..Self::mock_oracle()
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_margin(mut self, margin: u32) -> Self {
        self.margin = margin;
        self
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_s)
    }

    pub fn validate(&self) -> Result<()> {
        let name = &self.name;
        if !self.request_timeout_s.is_finite() || self.request_timeout_s <= 0.0 {
            return Err(Error::Config(format!("profile {name}: request_timeout_s must be > 0")));
        }
        if self.max_side < MIN_MAX_SIDE {
            return Err(Error::Config(format!(
                "profile {name}: max_side must be >= {MIN_MAX_SIDE}"
            )));
        }
        let endpoints = [
            match &self.compositor {
                CompositorSelector::Wire { endpoint } => Some(endpoint),
                _ => None,
            },
            match &self.segmenter {
                SegmenterSelector::Wire { endpoint } => Some(endpoint),
                _ => None,
            },
            match &self.refiner {
                RefinerSelector::Wire { endpoint } => Some(endpoint),
                _ => None,
            },
        ];
        for ep in endpoints.into_iter().flatten() {
            reqwest::Url::parse(ep)
                .map_err(|e| Error::Config(format!("profile {name}: bad endpoint {ep:?}: {e}")))?;
        }
        if let SegmenterSelector::Heuristic { threshold } = self.segmenter {
            if threshold.is_nan() || threshold < 0.0 {
                return Err(Error::Config(format!("profile {name}: heuristic threshold must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Named profiles known to a server or CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    #[serde(default)]
    pub profiles: BTreeMap<String, BackendProfile>,
}

impl Default for ProfileTable {
    /// Built-in mock profiles only.
    fn default() -> Self {
        let mut profiles = BTreeMap::new();
        for p in [BackendProfile::mock_oracle(), BackendProfile::mock_heuristic()] {
            profiles.insert(p.name.clone(), p);
        }
        Self { profiles }
    }
}

impl ProfileTable {
    /// Parses a TOML table of `[profiles.<name>]` sections on top of the built-ins.
    pub fn from_toml(text: &str) -> Result<Self> {
        let parsed: ProfileTable =
            toml::from_str(text).map_err(|e| Error::Config(format!("profile table: {e}")))?;
        let mut table = Self::default();
        for (name, mut p) in parsed.profiles {
            p.name = name.clone();
            p.validate()?;
            table.profiles.insert(name, p);
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn get(&self, name: &str) -> Option<&BackendProfile> {
        self.profiles.get(name)
    }

    pub fn insert(&mut self, profile: BackendProfile) {
        self.profiles.insert(profile.name.clone(), profile);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }
}
