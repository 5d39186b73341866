//! Stage-by-stage pipeline execution with hash-verified resume.
//!
//! Each stage records a digest of its inputs (its slice of the config plus
//! upstream artifact hashes) and the hashes of the files it wrote. A stage is
//! skipped when its record is complete, its input digest is unchanged and
//! its files still verify. Once any stage executes, every later stage
//! executes too.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use comment_topics_core::clustering::{
    self, load_assignments, save_assignments, ClusterAssignment, ReducedMatrix,
};
use comment_topics_core::corpus::{self, CleanDocument, MentionFilter, RawComment};
use comment_topics_core::embedding::{self, sidecar_path, Embedder, EmbeddingMatrix};
use comment_topics_core::topics::{self, Space, Topic};
use comment_topics_core::{jsonl, Error as CoreError};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::PipelineConfig;
use crate::error::{Result, ServiceError};
use crate::files::{read_json, sha256_bytes, write_json, RunLock};
use crate::manifest::{ArtifactRef, CorpusSummary, RunManifest, Stage, StageRecord, Status};
use crate::store::Store;

pub const INGEST_REPORT: &str = "ingest_report.json";
pub const PROVENANCE: &str = "embedding_provenance.json";
pub const PROJECTION: &str = "projection.bin";
pub const STATS: &str = "stats.json";
pub const SILHOUETTE: &str = "silhouette.json";
pub const TIMINGS: &str = "timings.json";

const REDUCED_MODEL: &str = "reduced";
const PROJECTION_MODEL: &str = "projection-2d";

/// Silhouette in both spaces; `None` where it is undefined for the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteFile {
    pub embedding: Option<topics::SilhouetteReport>,
    pub reduced: Option<topics::SilhouetteReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub struct PipelineRequest<'a> {
    pub run_id: &'a str,
    /// Raw comment file. Needed the first time, or when ingest must rerun.
    pub input: Option<&'a Path>,
    pub config: PipelineConfig,
    /// Last stage to run.
    pub until: Stage,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub executed: Vec<Stage>,
    pub skipped: Vec<Stage>,
}

pub type EmbedderFactory<'a> = dyn Fn(&PipelineConfig) -> Result<Box<dyn Embedder>> + 'a;

pub fn run_pipeline(store: &Store, request: PipelineRequest<'_>) -> Result<RunOutcome> {
    run_pipeline_with(store, request, &crate::remote::build_embedder)
}

/// Runs stages up to `request.until`, building the embedding backend only
/// if the embed stage actually executes.
pub fn run_pipeline_with(
    store: &Store,
    request: PipelineRequest<'_>,
    factory: &EmbedderFactory<'_>,
) -> Result<RunOutcome> {
    request.config.validate()?;
    let dir = store.create_run_dir(request.run_id)?;
    let _lock = RunLock::acquire(&dir)?;
    let fingerprint = request.config.fingerprint();

    let mut manifest = match store.load_manifest(request.run_id) {
        Ok(m) => {
            if m.config != fingerprint {
                if m.is_complete() {
                    return Err(ServiceError::Conflict(format!(
                        "run {:?} completed with a different configuration; use a new run id",
                        request.run_id
                    )));
                }
                RunManifest {
                    config: fingerprint.clone(),
                    ..m
                }
            } else {
                m
            }
        }
        Err(ServiceError::RunNotFound(_)) => RunManifest::new(request.run_id, fingerprint.clone()),
        Err(e) => return Err(e),
    };

    let mut runner = Runner {
        dir: &dir,
        config: &request.config,
        input: request.input,
        factory,
        timings: HashMap::new(),
    };
    let mut executed = Vec::new();
    let mut skipped = Vec::new();
    let mut dirty = false;

    for stage in Stage::ALL.into_iter().take_while(|s| *s <= request.until) {
        let input_hash = runner.input_hash(stage, &manifest)?;
        let rec = manifest.stage(stage);
        if !dirty && rec.input_hash.as_deref() == Some(input_hash.as_str()) && rec.verified(&dir) {
            log::info!("{stage}: up to date");
            skipped.push(stage);
            continue;
        }
        dirty = true;
        log::info!("{stage}: running");
        let started = Instant::now();
        match runner.execute(stage, &mut manifest) {
            Ok((artifact, extras)) => {
                runner.timings.insert(stage, started.elapsed().as_millis());
                *manifest.stage_mut(stage) = StageRecord {
                    stage,
                    status: Status::Complete,
                    input_hash: Some(input_hash),
                    artifact: Some(artifact),
                    extras,
                    error: None,
                };
                executed.push(stage);
            }
            Err(source) => {
                *manifest.stage_mut(stage) = StageRecord {
                    error: Some(source.to_string()),
                    status: Status::Failed,
                    ..StageRecord::pending(stage)
                };
                for later in Stage::ALL.into_iter().filter(|s| *s > stage) {
                    *manifest.stage_mut(later) = StageRecord::pending(later);
                }
                manifest.status = Status::Failed;
                store.save_manifest(&manifest)?;
                return Err(ServiceError::Stage { stage, source });
            }
        }
        store.save_manifest(&manifest)?;
    }

    if dirty {
        for later in Stage::ALL.into_iter().filter(|s| *s > request.until) {
            *manifest.stage_mut(later) = StageRecord::pending(later);
        }
    }
    manifest.status = if manifest.stages.iter().all(|s| s.status == Status::Complete) {
        Status::Complete
    } else {
        Status::Pending
    };
    store.save_manifest(&manifest)?;
    if !runner.timings.is_empty() {
        let timings: HashMap<&str, u128> = runner.timings.iter().map(|(s, t)| (s.as_str(), *t)).collect();
        write_json(&dir.join(TIMINGS), &timings)?;
    }
    Ok(RunOutcome {
        manifest,
        executed,
        skipped,
    })
}

struct Runner<'a> {
    dir: &'a Path,
    config: &'a PipelineConfig,
    input: Option<&'a Path>,
    factory: &'a EmbedderFactory<'a>,
    timings: HashMap<Stage, u128>,
}

type StageOutput = (ArtifactRef, Vec<ArtifactRef>);

fn upstream(manifest: &RunManifest, stage: Stage) -> String {
    manifest
        .stage(stage)
        .artifact
        .as_ref()
        .map(|a| a.sha256.clone())
        .unwrap_or_default()
}

fn service_to_core(e: ServiceError) -> CoreError {
    match e {
        ServiceError::Core(c) | ServiceError::Stage { source: c, .. } => c,
        other => CoreError::Input(other.to_string()),
    }
}

impl Runner<'_> {
    fn input_hash(&self, stage: Stage, manifest: &RunManifest) -> Result<String> {
        let c = self.config;
        let (config, inputs) = match stage {
            Stage::Ingest => {
                let corpus = match self.input {
                    Some(path) => crate::files::sha256_file(path)?,
                    None => manifest.corpus_hash.clone().ok_or_else(|| {
                        ServiceError::Usage(format!(
                            "run {:?} has no ingested comments; pass --input",
                            manifest.run_id
                        ))
                    })?,
                };
                (serde_json::to_value(&c.ingest)?, vec![corpus])
            }
            Stage::Preprocess => (json!(c.ingest.handles), vec![upstream(manifest, Stage::Ingest)]),
            Stage::Embed => (
                serde_json::to_value(&c.embedder)?,
                vec![upstream(manifest, Stage::Preprocess)],
            ),
            Stage::Reduce => (
                serde_json::to_value(&c.reduction)?,
                vec![upstream(manifest, Stage::Embed)],
            ),
            Stage::Cluster => (
                serde_json::to_value(&c.cluster)?,
                vec![upstream(manifest, Stage::Reduce)],
            ),
            Stage::Topics => (
                json!(null),
                vec![
                    upstream(manifest, Stage::Cluster),
                    upstream(manifest, Stage::Embed),
                    upstream(manifest, Stage::Preprocess),
                ],
            ),
            Stage::Trends => (
                serde_json::to_value(&c.trends)?,
                vec![upstream(manifest, Stage::Topics), upstream(manifest, Stage::Ingest)],
            ),
        };
        let doc = json!({ "stage": stage, "config": config, "inputs": inputs });
        Ok(sha256_bytes(doc.to_string().as_bytes()))
    }

    fn execute(&self, stage: Stage, manifest: &mut RunManifest) -> Result<StageOutput, CoreError> {
        match stage {
            Stage::Ingest => self.ingest(manifest),
            Stage::Preprocess => self.preprocess(manifest),
            Stage::Embed => self.embed(),
            Stage::Reduce => self.reduce(),
            Stage::Cluster => self.cluster(),
            Stage::Topics => self.topics(),
            Stage::Trends => self.trends(),
        }
    }

    fn artifact(&self, rel: &str) -> Result<ArtifactRef, CoreError> {
        ArtifactRef::of(self.dir, rel).map_err(service_to_core)
    }

    fn matrix_artifacts(&self, rel: &str) -> Result<StageOutput, CoreError> {
        let side = sidecar_path(Path::new(rel));
        Ok((
            self.artifact(rel)?,
            vec![self.artifact(side.to_str().expect("utf-8 path"))?],
        ))
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<ArtifactRef, CoreError> {
        write_json(&self.dir.join(rel), value).map_err(service_to_core)?;
        self.artifact(rel)
    }

    fn ingest(&self, manifest: &mut RunManifest) -> Result<StageOutput, CoreError> {
        let path = self.input.ok_or_else(|| {
            CoreError::Input("the ingest stage must rerun; pass --input with the comment file".into())
        })?;
        let corpus = corpus::ingest_path(path, &self.config.ingest)?;
        if corpus.comments.is_empty() {
            return Err(CoreError::Input(format!(
                "{} contains no valid comments ({} lines skipped)",
                path.display(),
                corpus.report.skipped
            )));
        }
        for w in corpus.report.warnings.iter().take(5) {
            log::warn!("ingest: {w}");
        }
        let rel = Stage::Ingest.artifact();
        jsonl::save(&self.dir.join(rel), &corpus.comments)?;
        manifest.corpus_hash = Some(crate::files::sha256_file(path).map_err(service_to_core)?);
        let first = corpus.comments.iter().map(|c| c.created_at).min();
        let last = corpus.comments.iter().map(|c| c.created_at).max();
        manifest.corpus = Some(CorpusSummary {
            comments: corpus.comments.len(),
            documents: 0,
            excluded: 0,
            first_comment: first,
            last_comment: last,
        });
        let report = self.write_json(INGEST_REPORT, &corpus.report)?;
        Ok((self.artifact(rel)?, vec![report]))
    }

    fn load_comments(&self) -> Result<Vec<RawComment>, CoreError> {
        jsonl::load(&self.dir.join(Stage::Ingest.artifact()))
    }

    fn load_documents(&self) -> Result<Vec<CleanDocument>, CoreError> {
        jsonl::load(&self.dir.join(Stage::Preprocess.artifact()))
    }

    fn preprocess(&self, manifest: &mut RunManifest) -> Result<StageOutput, CoreError> {
        let comments = self.load_comments()?;
        let filter = MentionFilter::new(&self.config.ingest.handles);
        let docs: Vec<CleanDocument> = comments.iter().map(|c| corpus::preprocess(c, &filter)).collect();
        let excluded = docs.iter().filter(|d| d.excluded).count();
        if excluded == docs.len() {
            return Err(CoreError::Input("every comment is empty after cleaning".into()));
        }
        if let Some(summary) = manifest.corpus.as_mut() {
            summary.documents = docs.len() - excluded;
            summary.excluded = excluded;
        }
        let rel = Stage::Preprocess.artifact();
        jsonl::save(&self.dir.join(rel), &docs)?;
        Ok((self.artifact(rel)?, vec![]))
    }

    fn embed(&self) -> Result<StageOutput, CoreError> {
        let docs = self.load_documents()?;
        let backend = (self.factory)(self.config).map_err(service_to_core)?;
        let (matrix, provenance) = embedding::embed_documents(backend.as_ref(), &docs, &self.config.embedder)?;
        if provenance.truncated_sentences > 0 {
            log::warn!(
                "{} sentences truncated to {} tokens",
                provenance.truncated_sentences,
                self.config.embedder.max_tokens
            );
        }
        let rel = Stage::Embed.artifact();
        matrix.save(&self.dir.join(rel))?;
        let (main, mut extras) = self.matrix_artifacts(rel)?;
        extras.push(self.write_json(PROVENANCE, &provenance)?);
        Ok((main, extras))
    }

    fn load_embeddings(&self) -> Result<EmbeddingMatrix, CoreError> {
        EmbeddingMatrix::load(&self.dir.join(Stage::Embed.artifact()))
    }

    fn reduce(&self) -> Result<StageOutput, CoreError> {
        let matrix = self.load_embeddings()?;
        let reduced = clustering::reduce(&matrix, &self.config.reduction)?;
        let projection = clustering::project_2d_with(
            &matrix,
            &clustering::ReductionConfig {
                output_dims: 2,
                ..self.config.reduction.clone()
            },
        )?;
        let rel = Stage::Reduce.artifact();
        reduced.to_embedding_matrix(REDUCED_MODEL)?.save(&self.dir.join(rel))?;
        projection
            .to_embedding_matrix(PROJECTION_MODEL)?
            .save(&self.dir.join(PROJECTION))?;
        let (main, mut extras) = self.matrix_artifacts(rel)?;
        let (p, p_extras) = self.matrix_artifacts(PROJECTION)?;
        extras.push(p);
        extras.extend(p_extras);
        Ok((main, extras))
    }

    fn cluster(&self) -> Result<StageOutput, CoreError> {
        let reduced = load_reduced(&self.dir.join(Stage::Reduce.artifact()))?;
        let assignments = clustering::cluster(&reduced, &self.config.cluster)?;
        let rel = Stage::Cluster.artifact();
        save_assignments(&self.dir.join(rel), &assignments)?;
        Ok((self.artifact(rel)?, vec![]))
    }

    fn topics(&self) -> Result<StageOutput, CoreError> {
        let assignments = load_assignments(&self.dir.join(Stage::Cluster.artifact()))?;
        let topics = topics::build_topics(&assignments);
        let stats = topics::corpus_stats(&topics, assignments.len())?;
        let matrix = self.load_embeddings()?;
        let reduced = load_reduced(&self.dir.join(Stage::Reduce.artifact()))?;
        let silhouette = silhouettes(&matrix, &reduced, &assignments)?;
        let rel = Stage::Topics.artifact();
        let main = self.write_json(rel, &topics)?;
        let extras = vec![self.write_json(STATS, &stats)?, self.write_json(SILHOUETTE, &silhouette)?];
        Ok((main, extras))
    }

    fn trends(&self) -> Result<StageOutput, CoreError> {
        let topics: Vec<Topic> = read_json(&self.dir.join(Stage::Topics.artifact())).map_err(service_to_core)?;
        let timestamps = self
            .load_comments()?
            .into_iter()
            .map(|c| (c.id, c.created_at))
            .collect();
        let series = topics::compute_trends(&topics, &timestamps, &self.config.trends)?;
        Ok((self.write_json(Stage::Trends.artifact(), &series)?, vec![]))
    }
}

pub fn load_reduced(path: &Path) -> Result<ReducedMatrix, CoreError> {
    let m = EmbeddingMatrix::load(path)?;
    ReducedMatrix::new(m.ids, m.vectors)
}

fn labels_in_order(ids: &[String], assignments: &[ClusterAssignment]) -> Result<Vec<i64>, CoreError> {
    let by_id: HashMap<&str, i64> = assignments.iter().map(|a| (a.doc_id.as_str(), a.label)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| CoreError::Input(format!("document {id} has no cluster assignment")))
        })
        .collect()
}

fn silhouettes(
    matrix: &EmbeddingMatrix,
    reduced: &ReducedMatrix,
    assignments: &[ClusterAssignment],
) -> Result<SilhouetteFile, CoreError> {
    let mut note = None;
    let mut score = |vectors, ids: &[String], space| -> Result<_, CoreError> {
        match topics::silhouette(vectors, &labels_in_order(ids, assignments)?, space) {
            Ok(r) => Ok(Some(r)),
            Err(CoreError::Undefined(why)) => {
                note = Some(CoreError::Undefined(why).to_string());
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };
    let embedding = score(&matrix.vectors, &matrix.ids, Space::Embedding)?;
    let reduced = score(&reduced.points, &reduced.ids, Space::Reduced)?;
    Ok(SilhouetteFile {
        embedding,
        reduced,
        note,
    })
}
