//! Pipeline configuration as read from `--config` files.

use std::path::Path;

use comment_topics_core::clustering::{ClusterConfig, ReductionConfig};
use comment_topics_core::corpus::IngestConfig;
use comment_topics_core::embedding::{EmbedderConfig, HASHING_BACKEND};
use comment_topics_core::topics::TrendConfig;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

pub const REMOTE_BACKEND: &str = "remote";

/// Every setting that influences pipeline output. Missing keys take defaults,
/// so a config file only needs the values it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Seed for task sampling and per-annotator task order.
    pub seed: u64,
    pub ingest: IngestConfig,
    pub embedder: EmbedderConfig,
    /// Connection settings for the `remote` embedding backend. Not part of
    /// the run fingerprint: any endpoint serving the same model is equivalent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteConfig>,
    pub reduction: ReductionConfig,
    pub cluster: ClusterConfig,
    pub trends: TrendConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            ingest: IngestConfig::default(),
            embedder: EmbedderConfig::default(),
            remote: None,
            reduction: ReductionConfig::default(),
            cluster: ClusterConfig::default(),
            trends: TrendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Endpoint accepting `POST {"model", "sentences"}`.
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Extra attempts after a connection failure or server error.
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| ServiceError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Applies a global seed to every seeded stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.embedder.seed = seed;
        self.reduction.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        self.embedder
            .validate()
            .map_err(|e| ServiceError::Usage(e.to_string()))?;
        match self.embedder.backend_id.as_str() {
            HASHING_BACKEND => {}
            REMOTE_BACKEND if self.remote.is_some() => {}
            REMOTE_BACKEND => {
                return Err(ServiceError::Usage(
                    "embedder.backend_id is \"remote\" but no remote.url is configured".into(),
                ))
            }
            other => {
                return Err(ServiceError::Usage(format!(
                    "unknown embedding backend {other:?}; expected \"{HASHING_BACKEND}\" or \"{REMOTE_BACKEND}\""
                )))
            }
        }
        if self.cluster.min_cluster_size < 2 {
            return Err(ServiceError::Usage("cluster.min_cluster_size must be at least 2".into()));
        }
        Ok(())
    }

    /// The config as stored in manifests, without connection details.
    pub fn fingerprint(&self) -> PipelineConfig {
        PipelineConfig {
            remote: None,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let c: PipelineConfig =
            serde_json::from_str(r#"{"reduction": {"n_neighbors": 15}, "cluster": {"min_cluster_size": 5}}"#)
                .unwrap();
        assert_eq!(c.reduction.n_neighbors, 15);
        assert_eq!(c.reduction.output_dims, 20);
        assert_eq!(c.cluster.min_cluster_size, 5);
        assert_eq!(c.embedder, EmbedderConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn remote_backend_needs_an_url() {
        let mut c = PipelineConfig::default();
        c.embedder.backend_id = REMOTE_BACKEND.into();
        assert!(c.validate().is_err());
        c.remote = Some(RemoteConfig {
            url: "http://localhost:9000/embed".into(),
            timeout_ms: 10,
            retries: 0,
            backoff_ms: 0,
        });
        c.validate().unwrap();
        assert!(c.fingerprint().remote.is_none());
    }

    #[test]
    fn seed_reaches_every_stage() {
        let c = PipelineConfig::default().with_seed(9);
        assert_eq!((c.seed, c.embedder.seed, c.reduction.seed), (9, 9, 9));
    }
}
