//! HTTP embedding backend.
//!
//! Talks to any server that answers `POST {"model": .., "sentences": [..]}`
//! with `{"embeddings": [[..], ..]}`, one row per sentence in order. A thin
//! wrapper around a sentence-transformers model is enough.

use std::thread;
use std::time::Duration;

use comment_topics_core::embedding::{Embedder, EmbedderConfig, HashingEmbedder, HASHING_BACKEND};
use comment_topics_core::EmbedError;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, RemoteConfig};
use crate::error::{Result, ServiceError};

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    sentences: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f32>>,
}

pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    config: RemoteConfig,
    model: String,
    dimension: usize,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteConfig, embedder: &EmbedderConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| ServiceError::Usage(format!("cannot build HTTP client: {e}")))?;
        Ok(RemoteEmbedder {
            client,
            config,
            model: embedder.model_name.clone(),
            dimension: embedder.dimension,
        })
    }

    fn attempt(&self, sentences: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let response = self
            .client
            .post(&self.config.url)
            .json(&EmbedRequest {
                model: &self.model,
                sentences,
            })
            .send()
            .map_err(|e| EmbedError::Unavailable(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() {
            return Err(EmbedError::Unavailable(format!("server answered {status}")));
        }
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(EmbedError::Input(format!("server answered {status}: {body}")));
        }
        let parsed: EmbedResponse = response
            .json()
            .map_err(|e| EmbedError::Input(format!("unreadable response: {e}")))?;
        if parsed.embeddings.len() != sentences.len() {
            return Err(EmbedError::RowCount {
                expected: sentences.len(),
                actual: parsed.embeddings.len(),
            });
        }
        for row in &parsed.embeddings {
            if row.len() != self.dimension {
                return Err(EmbedError::DimensionMismatch {
                    expected: self.dimension,
                    actual: row.len(),
                });
            }
        }
        Ok(parsed.embeddings)
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, sentences: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut tries = 0;
        loop {
            match self.attempt(sentences) {
                Err(e) if e.is_retriable() && tries < self.config.retries => {
                    tries += 1;
                    log::warn!("embedding attempt {tries} failed: {e}; retrying in {delay:?}");
                    thread::sleep(delay);
                    delay *= 2;
                }
                other => return other,
            }
        }
    }
}

/// Builds the backend a config names.
pub fn build_embedder(config: &PipelineConfig) -> Result<Box<dyn Embedder>> {
    config.validate()?;
    if config.embedder.backend_id == HASHING_BACKEND {
        return Ok(Box::new(HashingEmbedder::new(
            config.embedder.dimension,
            config.embedder.seed,
        )));
    }
    let remote = config.remote.clone().expect("validated");
    Ok(Box::new(RemoteEmbedder::new(remote, &config.embedder)?))
}
