//! Run manifests: what a run was configured with and what each stage produced.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::files::sha256_file;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Preprocess,
    Embed,
    Reduce,
    Cluster,
    Topics,
    Trends,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Preprocess,
        Stage::Embed,
        Stage::Reduce,
        Stage::Cluster,
        Stage::Topics,
        Stage::Trends,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Preprocess => "preprocess",
            Stage::Embed => "embed",
            Stage::Reduce => "reduce",
            Stage::Cluster => "cluster",
            Stage::Topics => "topics",
            Stage::Trends => "trends",
        }
    }

    /// The stage's primary artifact, relative to the run directory.
    pub fn artifact(self) -> &'static str {
        match self {
            Stage::Ingest => "comments.jsonl",
            Stage::Preprocess => "documents.jsonl",
            Stage::Embed => "embeddings.bin",
            Stage::Reduce => "reduced.bin",
            Stage::Cluster => "assignments.jsonl",
            Stage::Topics => "topics.json",
            Stage::Trends => "trends.json",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
}

impl ArtifactRef {
    pub fn of(dir: &Path, rel: &str) -> Result<Self> {
        Ok(ArtifactRef {
            path: rel.to_string(),
            sha256: sha256_file(&dir.join(rel))?,
        })
    }

    pub fn verify(&self, dir: &Path) -> bool {
        sha256_file(&dir.join(&self.path)).is_ok_and(|h| h == self.sha256)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: Status,
    /// Digest of everything the stage consumed: its config slice and the
    /// hashes of upstream artifacts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub artifact: Option<ArtifactRef>,
    /// Sidecars and secondary outputs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extras: Vec<ArtifactRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StageRecord {
    pub fn pending(stage: Stage) -> Self {
        StageRecord {
            stage,
            status: Status::Pending,
            input_hash: None,
            artifact: None,
            extras: Vec::new(),
            error: None,
        }
    }

    /// True when complete and every listed file still hashes as recorded.
    pub fn verified(&self, dir: &Path) -> bool {
        self.status == Status::Complete
            && self.artifact.as_ref().is_some_and(|a| a.verify(dir))
            && self.extras.iter().all(|a| a.verify(dir))
    }
}

/// Data time range, taken from comment timestamps rather than the clock so
/// that reruns produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub comments: usize,
    pub documents: usize,
    pub excluded: usize,
    pub first_comment: Option<DateTime<Utc>>,
    pub last_comment: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub status: Status,
    /// SHA-256 of the raw input file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<CorpusSummary>,
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(run_id: &str, config: PipelineConfig) -> Self {
        RunManifest {
            run_id: run_id.to_string(),
            status: Status::Pending,
            corpus_hash: None,
            corpus: None,
            config,
            stages: Stage::ALL.into_iter().map(StageRecord::pending).collect(),
        }
    }

    pub fn stage(&self, stage: Stage) -> &StageRecord {
        &self.stages[stage.index()]
    }

    pub fn stage_mut(&mut self, stage: Stage) -> &mut StageRecord {
        &mut self.stages[stage.index()]
    }

    pub fn is_complete(&self) -> bool {
        self.status == Status::Complete
    }

    /// Primary artifacts of completed stages.
    pub fn artifacts(&self) -> Vec<&ArtifactRef> {
        self.stages.iter().filter_map(|s| s.artifact.as_ref()).collect()
    }

    /// Requires `stage` to be complete, for readers of its outputs.
    pub fn require(&self, stage: Stage) -> Result<&StageRecord> {
        let rec = self.stage(stage);
        if rec.status != Status::Complete {
            return Err(crate::error::ServiceError::NotReady(format!(
                "run {:?} has not completed the {stage} stage",
                self.run_id
            )));
        }
        Ok(rec)
    }
}
