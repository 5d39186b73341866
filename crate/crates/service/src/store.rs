//! Directory-per-run persistence.
//!
//! ```text
//! <root>/index.json
//! <root>/<run_id>/manifest.json
//! <root>/<run_id>/{comments.jsonl, documents.jsonl, embeddings.bin, ...}
//! <root>/<run_id>/tasks/<kind>.jsonl
//! <root>/<run_id>/{annotations,adjudications,mutations,task_orders}.jsonl
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use comment_topics_core::clustering::{load_assignments, ClusterAssignment, ReducedMatrix};
use comment_topics_core::corpus::RawComment;
use comment_topics_core::embedding::EmbeddingMatrix;
use comment_topics_core::evaluation::TaskRecord;
use comment_topics_core::jsonl;
use comment_topics_core::topics::{Topic, TopicStats, TrendSeries};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::files::{read_json, write_json};
use crate::manifest::{RunManifest, Stage, Status, MANIFEST_FILE};
use crate::pipeline::{load_reduced, SilhouetteFile, PROJECTION, SILHOUETTE, STATS};

pub const INDEX_FILE: &str = "index.json";
pub const TASKS_DIR: &str = "tasks";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub documents: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topics: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Index {
    runs: Vec<RunSummary>,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

/// Run ids become directory names, so keep them to a safe alphabet.
pub fn validate_run_id(run_id: &str) -> Result<()> {
    let ok = !run_id.is_empty()
        && run_id.len() <= 128
        && !run_id.starts_with('.')
        && run_id != INDEX_FILE
        && run_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ServiceError::Usage(format!(
            "invalid run id {run_id:?}: use letters, digits, '-', '_' or '.', not starting with '.' and not {INDEX_FILE:?}"
        )))
    }
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| ServiceError::io(&root, e))?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> Result<PathBuf> {
        validate_run_id(run_id)?;
        Ok(self.root.join(run_id))
    }

    pub fn existing_run_dir(&self, run_id: &str) -> Result<PathBuf> {
        let dir = self.run_dir(run_id)?;
        if dir.join(MANIFEST_FILE).is_file() {
            Ok(dir)
        } else {
            Err(ServiceError::RunNotFound(run_id.to_string()))
        }
    }

    pub fn create_run_dir(&self, run_id: &str) -> Result<PathBuf> {
        let dir = self.run_dir(run_id)?;
        fs::create_dir_all(&dir).map_err(|e| ServiceError::io(&dir, e))?;
        Ok(dir)
    }

    pub fn load_manifest(&self, run_id: &str) -> Result<RunManifest> {
        let dir = self.existing_run_dir(run_id)?;
        read_json(&dir.join(MANIFEST_FILE))
    }

    pub fn save_manifest(&self, manifest: &RunManifest) -> Result<()> {
        let dir = self.create_run_dir(&manifest.run_id)?;
        write_json(&dir.join(MANIFEST_FILE), manifest)?;
        self.rebuild_index()
    }

    /// Rewrites the index from the manifests on disk.
    pub fn rebuild_index(&self) -> Result<()> {
        let mut runs = Vec::new();
        let entries = fs::read_dir(&self.root).map_err(|e| ServiceError::io(&self.root, e))?;
        for entry in entries.flatten() {
            let path = entry.path().join(MANIFEST_FILE);
            let Ok(m) = read_json::<RunManifest>(&path) else {
                continue;
            };
            let topics = if m.stage(Stage::Topics).status == Status::Complete {
                read_json::<Vec<Topic>>(&entry.path().join(Stage::Topics.artifact()))
                    .ok()
                    .map(|t| t.len())
            } else {
                None
            };
            runs.push(RunSummary {
                run_id: m.run_id.clone(),
                status: m.status,
                documents: m.corpus.as_ref().map(|c| c.documents),
                topics,
            });
        }
        runs.sort_by(|a, b| a.run_id.cmp(&b.run_id));
        write_json(&self.root.join(INDEX_FILE), &Index { runs })
    }

    pub fn list_runs(&self) -> Result<Vec<RunSummary>> {
        let path = self.root.join(INDEX_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        Ok(read_json::<Index>(&path)?.runs)
    }

    /// Task files of a run, all kinds, in file-name order.
    pub fn load_tasks(&self, run_id: &str) -> Result<Vec<TaskRecord>> {
        let dir = self.existing_run_dir(run_id)?.join(TASKS_DIR);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| ServiceError::io(&dir, e))?
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        let mut tasks = Vec::new();
        for f in files {
            tasks.extend(jsonl::load::<TaskRecord>(&f)?);
        }
        Ok(tasks)
    }

    pub fn load_run(&self, run_id: &str) -> Result<RunData> {
        RunData::load(self, run_id)
    }
}

/// Everything a completed run produced, read back from its artifacts.
#[derive(Debug, Clone)]
pub struct RunData {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub comments: HashMap<String, RawComment>,
    pub topics: Vec<Topic>,
    pub assignments: Vec<ClusterAssignment>,
    pub embeddings: EmbeddingMatrix,
    pub reduced: ReducedMatrix,
    pub projection: ReducedMatrix,
    pub trends: Vec<TrendSeries>,
    pub stats: TopicStats,
    pub silhouette: SilhouetteFile,
}

impl RunData {
    fn load(store: &Store, run_id: &str) -> Result<Self> {
        let manifest = store.load_manifest(run_id)?;
        let dir = store.existing_run_dir(run_id)?;
        if !manifest.is_complete() {
            return Err(ServiceError::NotReady(format!(
                "run {run_id:?} is not complete; finish it with the trends command"
            )));
        }
        if let Some(bad) = manifest.stages.iter().find(|s| !s.verified(&dir)) {
            return Err(ServiceError::NotReady(format!(
                "artifacts of stage {} in run {run_id:?} fail hash verification; rerun the pipeline",
                bad.stage
            )));
        }
        let comments: Vec<RawComment> = jsonl::load(&dir.join(Stage::Ingest.artifact()))?;
        let embeddings = EmbeddingMatrix::load(&dir.join(Stage::Embed.artifact()))?;
        Ok(RunData {
            comments: comments.into_iter().map(|c| (c.id.clone(), c)).collect(),
            topics: read_json(&dir.join(Stage::Topics.artifact()))?,
            assignments: load_assignments(&dir.join(Stage::Cluster.artifact()))?,
            embeddings,
            reduced: load_reduced(&dir.join(Stage::Reduce.artifact()))?,
            projection: load_reduced(&dir.join(PROJECTION))?,
            trends: read_json(&dir.join(Stage::Trends.artifact()))?,
            stats: read_json(&dir.join(STATS))?,
            silhouette: read_json(&dir.join(SILHOUETTE))?,
            manifest,
            dir,
        })
    }

    /// Original comment text by id.
    pub fn texts(&self) -> HashMap<String, String> {
        self.comments
            .iter()
            .map(|(id, c)| (id.clone(), c.text.clone()))
            .collect()
    }

    pub fn topic(&self, topic_id: i64) -> Option<&Topic> {
        self.topics.iter().find(|t| t.topic_id == topic_id)
    }
}
