//! Service configuration, loaded from TOML.

use std::path::{Path, PathBuf};

use asksci_core::answer::QueryConfig;
use serde::{Deserialize, Serialize};

use crate::embedder::EmbedderConfig;
use crate::engine::DEFAULT_FIGURE_BASE;
use crate::store::DataPaths;

pub const ENV_CONFIG: &str = "ASKSCI_CONFIG";
pub const ENV_LISTEN: &str = "ASKSCI_LISTEN";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("missing required file {0}")]
    MissingFile(PathBuf),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: String,
    /// Directory holding the built indexes, payloads and manifests.
    pub data_dir: PathBuf,
    pub question_log: PathBuf,
    pub vote_log: PathBuf,
    /// Served at `/assets/figures/`.
    pub figures_dir: Option<PathBuf>,
    /// Web UI files, served at `/`.
    pub static_dir: Option<PathBuf>,
    /// Allowed CORS origins; empty disables CORS headers.
    pub cors_allowlist: Vec<String>,
    /// Requests per client per minute; 0 disables the cap.
    pub rate_limit_per_minute: u32,
    pub figure_base: String,
    pub query: QueryConfig,
    pub embedder: EmbedderConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("data"),
            question_log: PathBuf::from("logs/questions.log"),
            vote_log: PathBuf::from("logs/votes.log"),
            figures_dir: None,
            static_dir: None,
            cors_allowlist: Vec::new(),
            rate_limit_per_minute: 60,
            figure_base: DEFAULT_FIGURE_BASE.into(),
            query: QueryConfig::default(),
            embedder: EmbedderConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn data_paths(&self) -> DataPaths {
        DataPaths::in_dir(&self.data_dir)
    }

    /// Fails when a referenced data file or directory is missing or a
    /// section is invalid.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let paths = self.data_paths();
        for p in paths.all() {
            if !p.is_file() {
                return Err(ConfigError::MissingFile(p.to_path_buf()));
            }
        }
        for dir in [&self.figures_dir, &self.static_dir].into_iter().flatten() {
            if !dir.is_dir() {
                return Err(ConfigError::MissingFile(dir.clone()));
            }
        }
        self.query
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.embedder
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
