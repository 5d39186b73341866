//! Approximate topic assignment for documents that arrive after a run.
//!
//! The clusterer is batch-only, so a new document is placed by proxy: its
//! nearest training documents in embedding space vote a position in the
//! reduced space by their mean, and the document joins the topic whose
//! representative is closest to that position, provided it lies within the
//! topic's radius (the farthest member from the representative).

use std::collections::HashMap;

use comment_topics_core::corpus::{clean_text, MentionFilter};
use comment_topics_core::embedding::{cosine, embed_documents, Embedder};
use comment_topics_core::topics::Topic;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::store::RunData;

pub const DEFAULT_NEIGHBOURS: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Topic id, or -1 when no topic is close enough.
    pub label: i64,
    /// Always true: the result is not what a fresh clustering would give.
    pub approximate: bool,
    /// Distance in reduced space to the chosen (or nearest) representative.
    pub distance: f64,
    /// The nearest topic's radius.
    pub cutoff: f64,
    pub nearest_topic: i64,
    pub neighbours: Vec<String>,
}

fn euclid(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Per topic: representative position and radius in reduced space.
fn topic_geometry(run: &RunData, topics: &[Topic]) -> Vec<(i64, Vec<f32>, f64)> {
    let row_of: HashMap<&str, usize> = run.reduced.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    topics
        .iter()
        .filter_map(|t| {
            let rep = run.reduced.points.row(*row_of.get(t.representative_id.as_str())?).to_vec();
            let radius = t
                .member_ids
                .iter()
                .filter_map(|m| row_of.get(m.as_str()))
                .map(|&i| euclid(run.reduced.points.row(i), &rep))
                .fold(0.0, f64::max);
            Some((t.topic_id, rep, radius))
        })
        .collect()
}

pub fn assign_text(run: &RunData, backend: &dyn Embedder, text: &str, k: usize) -> Result<Assignment> {
    let config = &run.manifest.config;
    let filter = MentionFilter::new(&config.ingest.handles);
    let doc = clean_text("new", text, &filter);
    if doc.excluded {
        return Err(ServiceError::Invalid(vec!["text: empty after cleaning".into()]));
    }
    let (m, _) = embed_documents(backend, std::slice::from_ref(&doc), &config.embedder)?;
    let query = m.vectors.row(0);

    let emb_row: HashMap<&str, usize> = run.embeddings.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut scored: Vec<(f64, &str)> = run
        .reduced
        .ids
        .iter()
        .filter_map(|id| emb_row.get(id.as_str()).map(|&r| (cosine(query, run.embeddings.vectors.row(r)), id.as_str())))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.truncate(k.max(1));

    let red_row: HashMap<&str, usize> = run.reduced.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let dims = run.reduced.points.cols;
    let mut centre = vec![0f64; dims];
    for (_, id) in &scored {
        for (c, v) in centre.iter_mut().zip(run.reduced.points.row(red_row[id])) {
            *c += f64::from(*v);
        }
    }
    let centre: Vec<f32> = centre.iter().map(|c| (c / scored.len() as f64) as f32).collect();

    let geometry = topic_geometry(run, &run.topics);
    let nearest = geometry
        .iter()
        .map(|(id, rep, radius)| (*id, euclid(&centre, rep), *radius))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let neighbours = scored.iter().map(|(_, id)| id.to_string()).collect();
    let (topic, distance, cutoff) =
        nearest.ok_or_else(|| ServiceError::NotReady("the run has no topics to assign to".into()))?;
    Ok(Assignment {
        label: if distance <= cutoff { topic } else { -1 },
        approximate: true,
        distance,
        cutoff,
        nearest_topic: topic,
        neighbours,
    })
}
