//! Append-only records kept next to a run's artifacts: annotations,
//! adjudications, topic name and theme edits, and per-annotator task orders.
//!
//! Nothing here is ever rewritten. Current state (names, pending tasks,
//! reports) is derived by replaying the files.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use comment_topics_core::evaluation::{
    Adjudication, Annotation, AnnotationPayload, TaskKind, TaskRecord, TaskView,
};
use comment_topics_core::jsonl;
use comment_topics_core::topics::Topic;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ServiceError};
use crate::files::sha256_bytes;

pub const ANNOTATIONS: &str = "annotations.jsonl";
pub const ADJUDICATIONS: &str = "adjudications.jsonl";
pub const MUTATIONS: &str = "mutations.jsonl";
pub const TASK_ORDERS: &str = "task_orders.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredAnnotation {
    pub seq: u64,
    pub submitted_at: DateTime<Utc>,
    #[serde(flatten)]
    pub annotation: Annotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredAdjudication {
    pub seq: u64,
    pub submitted_at: DateTime<Utc>,
    #[serde(flatten)]
    pub adjudication: Adjudication,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicField {
    Name,
    Theme,
}

/// One edit of a topic's name or theme. `value: None` clears the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mutation {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub topic_id: i64,
    pub field: TopicField,
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub editor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TaskOrder {
    annotator_id: String,
    /// Digest of the sorted task ids the order was drawn over.
    task_set: String,
    seed: u64,
    order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextTask {
    pub task: Option<TaskView>,
    pub progress: Progress,
}

/// Replays last-write-wins edits onto topics.
pub fn apply_mutations(topics: &mut [Topic], mutations: &[Mutation]) {
    let index: HashMap<i64, usize> = topics.iter().enumerate().map(|(i, t)| (t.topic_id, i)).collect();
    for m in mutations {
        if let Some(&i) = index.get(&m.topic_id) {
            match m.field {
                TopicField::Name => topics[i].name = m.value.clone(),
                TopicField::Theme => topics[i].theme = m.value.clone(),
            }
        }
    }
}

fn payload_kind(p: &AnnotationPayload) -> TaskKind {
    match p {
        AnnotationPayload::Intruder { .. } => TaskKind::Intruder,
        AnnotationPayload::Assignment { .. } => TaskKind::Assignment,
        AnnotationPayload::Expert(_) => TaskKind::Expert,
    }
}

fn units(task: &TaskRecord) -> Option<usize> {
    match task {
        TaskRecord::Assignment(t) => Some(t.queries.len()),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct Journal {
    dir: PathBuf,
}

fn load_or_empty<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if path.exists() {
        Ok(jsonl::load(path)?)
    } else {
        Ok(Vec::new())
    }
}

impl Journal {
    pub fn new(run_dir: impl Into<PathBuf>) -> Self {
        Journal { dir: run_dir.into() }
    }

    pub fn annotations(&self) -> Result<Vec<StoredAnnotation>> {
        load_or_empty(&self.dir.join(ANNOTATIONS))
    }

    pub fn adjudications(&self) -> Result<Vec<StoredAdjudication>> {
        load_or_empty(&self.dir.join(ADJUDICATIONS))
    }

    pub fn mutations(&self) -> Result<Vec<Mutation>> {
        load_or_empty(&self.dir.join(MUTATIONS))
    }

    /// Validates and appends one annotation. Each annotator may answer a
    /// task once, and a task takes at most two annotators.
    pub fn submit(&self, tasks: &[TaskRecord], annotation: Annotation) -> Result<StoredAnnotation> {
        let task = tasks
            .iter()
            .find(|t| t.task_id() == annotation.task_id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown task {:?}", annotation.task_id)))?;
        let mut problems = Vec::new();
        if annotation.annotator_id.trim().is_empty() {
            problems.push("annotator_id: must not be empty".to_string());
        }
        if payload_kind(&annotation.payload) != task.kind() {
            problems.push(format!(
                "payload.kind: task {} expects {:?}",
                task.task_id(),
                task.kind().as_str()
            ));
        } else {
            problems.extend(
                annotation
                    .payload
                    .validate_against(units(task))
                    .into_iter()
                    .map(|p| format!("payload.{p}")),
            );
        }
        if !problems.is_empty() {
            return Err(ServiceError::Invalid(problems));
        }
        let existing = self.annotations()?;
        if existing.iter().any(|a| {
            a.annotation.task_id == annotation.task_id && a.annotation.annotator_id == annotation.annotator_id
        }) {
            return Err(ServiceError::Conflict(format!(
                "annotator {:?} already answered task {:?}",
                annotation.annotator_id, annotation.task_id
            )));
        }
        if existing.iter().filter(|a| a.annotation.task_id == annotation.task_id).count() >= 2 {
            return Err(ServiceError::Conflict(format!(
                "task {:?} already has two annotators",
                annotation.task_id
            )));
        }
        let stored = StoredAnnotation {
            seq: existing.len() as u64,
            submitted_at: Utc::now(),
            annotation,
        };
        jsonl::append(&self.dir.join(ANNOTATIONS), &stored)?;
        Ok(stored)
    }

    /// Appends a verdict for one attribute of one expert form. A verdict is
    /// final; a second one for the same pair is rejected.
    pub fn adjudicate(&self, tasks: &[TaskRecord], adjudication: Adjudication) -> Result<StoredAdjudication> {
        match tasks.iter().find(|t| t.task_id() == adjudication.task_id) {
            None => {
                return Err(ServiceError::NotFound(format!(
                    "unknown task {:?}",
                    adjudication.task_id
                )))
            }
            Some(t) if t.kind() != TaskKind::Expert => {
                return Err(ServiceError::Invalid(vec![format!(
                    "task_id: {} is not an expert label form",
                    adjudication.task_id
                )]))
            }
            Some(_) => {}
        }
        let existing = self.adjudications()?;
        if existing.iter().any(|a| {
            a.adjudication.task_id == adjudication.task_id && a.adjudication.attribute == adjudication.attribute
        }) {
            return Err(ServiceError::Conflict(format!(
                "{} / {} is already adjudicated",
                adjudication.task_id,
                adjudication.attribute.label()
            )));
        }
        let stored = StoredAdjudication {
            seq: existing.len() as u64,
            submitted_at: Utc::now(),
            adjudication,
        };
        jsonl::append(&self.dir.join(ADJUDICATIONS), &stored)?;
        Ok(stored)
    }

    pub fn mutate(
        &self,
        topics: &[Topic],
        topic_id: i64,
        field: TopicField,
        value: Option<String>,
        editor: Option<String>,
    ) -> Result<Mutation> {
        if !topics.iter().any(|t| t.topic_id == topic_id) {
            return Err(ServiceError::NotFound(format!("unknown topic {topic_id}")));
        }
        let value = value.map(|v| v.trim().to_string()).filter(|v| !v.is_empty());
        let m = Mutation {
            seq: self.mutations()?.len() as u64,
            at: Utc::now(),
            topic_id,
            field,
            value,
            editor,
        };
        jsonl::append(&self.dir.join(MUTATIONS), &m)?;
        Ok(m)
    }

    /// The annotator's task order over the current task set, drawn once and
    /// recorded so it can be audited later.
    pub fn task_order(&self, tasks: &[TaskRecord], annotator_id: &str, seed: u64) -> Result<Vec<String>> {
        let mut ids: Vec<String> = tasks.iter().map(|t| t.task_id().to_string()).collect();
        ids.sort();
        let task_set = sha256_bytes(ids.join("\n").as_bytes());
        let path = self.dir.join(TASK_ORDERS);
        let recorded: Vec<TaskOrder> = load_or_empty(&path)?;
        if let Some(o) = recorded
            .iter()
            .rev()
            .find(|o| o.annotator_id == annotator_id && o.task_set == task_set && o.seed == seed)
        {
            return Ok(o.order.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(annotator_seed(seed, annotator_id));
        ids.shuffle(&mut rng);
        let order = TaskOrder {
            annotator_id: annotator_id.to_string(),
            task_set,
            seed,
            order: ids,
        };
        jsonl::append(&path, &order)?;
        Ok(order.order)
    }

    /// First task in the annotator's order that they have not answered and
    /// that does not already have two answers.
    pub fn next_task(&self, tasks: &[TaskRecord], annotator_id: &str, seed: u64) -> Result<NextTask> {
        if annotator_id.trim().is_empty() {
            return Err(ServiceError::Invalid(vec!["annotator: must not be empty".into()]));
        }
        let annotations = self.annotations()?;
        let mine: HashSet<&str> = annotations
            .iter()
            .filter(|a| a.annotation.annotator_id == annotator_id)
            .map(|a| a.annotation.task_id.as_str())
            .collect();
        let mut answers: HashMap<&str, usize> = HashMap::new();
        for a in &annotations {
            *answers.entry(a.annotation.task_id.as_str()).or_default() += 1;
        }
        let order = self.task_order(tasks, annotator_id, seed)?;
        let pending: Vec<&String> = order
            .iter()
            .filter(|id| !mine.contains(id.as_str()) && answers.get(id.as_str()).copied().unwrap_or(0) < 2)
            .collect();
        let done = order.iter().filter(|id| mine.contains(id.as_str())).count();
        let task = pending
            .first()
            .and_then(|id| tasks.iter().find(|t| t.task_id() == id.as_str()))
            .map(TaskRecord::view);
        Ok(NextTask {
            task,
            progress: Progress {
                done,
                total: done + pending.len(),
            },
        })
    }
}

fn annotator_seed(seed: u64, annotator_id: &str) -> u64 {
    let digest = Sha256::digest(annotator_id.as_bytes());
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(first)
}
