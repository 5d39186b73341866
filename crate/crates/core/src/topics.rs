//! Topics built from cluster assignments: representatives, corpus
//! statistics, silhouette diagnostics and time trends.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterAssignment;
use crate::embedding::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub topic_id: i64,
    pub member_ids: Vec<String>,
    pub size: usize,
    pub representative_id: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub theme: Option<String>,
}

/// One topic per non-noise label, ordered by label. Members keep assignment
/// order; the representative is the most probable member, ties going to the
/// smallest doc id.
pub fn build_topics(assignments: &[ClusterAssignment]) -> Vec<Topic> {
    let mut groups: BTreeMap<i64, Vec<&ClusterAssignment>> = BTreeMap::new();
    for a in assignments.iter().filter(|a| !a.is_noise()) {
        groups.entry(a.label).or_default().push(a);
    }
    groups
        .into_iter()
        .map(|(label, members)| {
            let rep = members
                .iter()
                .max_by(|x, y| {
                    x.probability
                        .total_cmp(&y.probability)
                        .then_with(|| y.doc_id.cmp(&x.doc_id))
                })
                .expect("group is non-empty");
            Topic {
                topic_id: label,
                representative_id: rep.doc_id.clone(),
                size: members.len(),
                member_ids: members.iter().map(|m| m.doc_id.clone()).collect(),
                name: None,
                theme: None,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicStats {
    pub n_topics: usize,
    pub corpus_size: usize,
    pub assigned: usize,
    pub coverage: f64,
    pub mean_size: f64,
    /// Population standard deviation of topic sizes.
    pub sd_size: f64,
}

pub fn corpus_stats(topics: &[Topic], corpus_size: usize) -> Result<TopicStats> {
    if corpus_size == 0 {
        return Err(Error::Input("corpus size must be positive".into()));
    }
    let assigned: usize = topics.iter().map(|t| t.size).sum();
    if assigned > corpus_size {
        return Err(Error::Input(format!(
            "topics hold {assigned} documents but the corpus has {corpus_size}"
        )));
    }
    let n = topics.len();
    let (mean_size, sd_size) = if n == 0 {
        (0.0, 0.0)
    } else {
        let mean = assigned as f64 / n as f64;
        let var = topics
            .iter()
            .map(|t| (t.size as f64 - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        (mean, var.sqrt())
    };
    Ok(TopicStats {
        n_topics: n,
        corpus_size,
        assigned,
        coverage: assigned as f64 / corpus_size as f64,
        mean_size,
        sd_size,
    })
}

impl TopicStats {
    /// `n_topics * mean_size` and `coverage * corpus_size` both recover the
    /// assigned count.
    pub fn is_consistent(&self) -> bool {
        let from_mean = (self.n_topics as f64 * self.mean_size).round();
        let from_coverage = (self.coverage * self.corpus_size as f64).round();
        from_mean == self.assigned as f64 && from_coverage == self.assigned as f64
    }
}

/// Consistency of rounded summary figures: `n_topics * mean_size` and
/// `coverage * corpus_size` agree within a relative `slack`.
pub fn summary_consistent(n_topics: f64, mean_size: f64, coverage: f64, corpus_size: f64, slack: f64) -> bool {
    let by_mean = n_topics * mean_size;
    let by_coverage = coverage * corpus_size;
    (by_mean - by_coverage).abs() <= slack * by_mean.max(by_coverage)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Embedding,
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteReport {
    pub coefficient: f64,
    pub n_points_scored: usize,
    pub n_noise_excluded: usize,
    pub n_clusters: usize,
    pub space: Space,
}

/// Mean silhouette over non-noise points, Euclidean distance. A point alone
/// in its cluster scores 0.
///
/// `vectors` rows align with `labels`.
pub fn silhouette(vectors: &Matrix, labels: &[i64], space: Space) -> Result<SilhouetteReport> {
    if vectors.rows != labels.len() {
        return Err(Error::Input(format!(
            "{} rows for {} labels",
            vectors.rows,
            labels.len()
        )));
    }
    let scored: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] >= 0).collect();
    let mut cluster_index: BTreeMap<i64, usize> = BTreeMap::new();
    for &i in &scored {
        let next = cluster_index.len();
        cluster_index.entry(labels[i]).or_insert(next);
    }
    let k = cluster_index.len();
    if k < 2 {
        return Err(Error::Undefined(format!(
            "silhouette coefficient with {k} non-noise cluster(s)"
        )));
    }
    let which: Vec<usize> = scored.iter().map(|&i| cluster_index[&labels[i]]).collect();
    let mut counts = vec![0usize; k];
    for &c in &which {
        counts[c] += 1;
    }

    use rayon::prelude::*;
    let total: f64 = (0..scored.len())
        .into_par_iter()
        .map(|a| {
            let mut sums = vec![0f64; k];
            let row = vectors.row(scored[a]);
            for (b, &j) in scored.iter().enumerate() {
                if a != b {
                    sums[which[b]] += dist(row, vectors.row(j));
                }
            }
            let own = which[a];
            if counts[own] == 1 {
                return 0.0;
            }
            let intra = sums[own] / (counts[own] - 1) as f64;
            let nearest = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / counts[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = intra.max(nearest);
            if denom == 0.0 {
                0.0
            } else {
                (nearest - intra) / denom
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(SilhouetteReport {
        coefficient: total / scored.len() as f64,
        n_points_scored: scored.len(),
        n_noise_excluded: labels.len() - scored.len(),
        n_clusters: k,
        space,
    })
}

fn dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = f64::from(*x) - f64::from(*y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Rising,
    Falling,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendBucket {
    pub window_start: DateTime<Utc>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSeries {
    pub topic_id: i64,
    pub buckets: Vec<TrendBucket>,
    /// Least-squares slope of count against bucket index.
    pub slope: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrendConfig {
    pub window_seconds: i64,
    pub horizon: usize,
    /// Documents per window; |slope| above this is a trend.
    pub threshold: f64,
}

impl Default for TrendConfig {
    fn default() -> Self {
        TrendConfig {
            window_seconds: 7 * 24 * 3600,
            horizon: 8,
            threshold: 0.5,
        }
    }
}

/// Exact least-squares slope of `counts` against 0..n.
///
/// With integer counts the numerator and denominator are integers, so
/// reversing the sequence negates the slope exactly.
pub fn trend_slope(counts: &[u64]) -> f64 {
    let n = counts.len() as i128;
    if n < 2 {
        return 0.0;
    }
    let mut num: i128 = 0;
    let mut den: i128 = 0;
    for (i, &c) in counts.iter().enumerate() {
        let centered = 2 * i as i128 - (n - 1);
        num += centered * c as i128;
        den += centered * centered;
    }
    2.0 * num as f64 / den as f64
}

pub fn classify(slope: f64, threshold: f64) -> Direction {
    if slope > threshold {
        Direction::Rising
    } else if slope < -threshold {
        Direction::Falling
    } else {
        Direction::Flat
    }
}

/// Buckets topic members into epoch-aligned windows. The last window is the
/// one containing the newest timestamp among all topic members; the series
/// covers `horizon` windows ending there.
pub fn compute_trends(
    topics: &[Topic],
    timestamps: &HashMap<String, DateTime<Utc>>,
    config: &TrendConfig,
) -> Result<Vec<TrendSeries>> {
    if config.horizon < 2 {
        return Err(Error::Config("trend horizon must be at least 2 windows".into()));
    }
    if config.window_seconds <= 0 {
        return Err(Error::Config("trend window must be positive".into()));
    }
    let mut latest: Option<DateTime<Utc>> = None;
    for t in topics {
        for id in &t.member_ids {
            let ts = timestamps
                .get(id)
                .ok_or_else(|| Error::Input(format!("no timestamp for document {id}")))?;
            latest = Some(latest.map_or(*ts, |l| l.max(*ts)));
        }
    }
    let Some(latest) = latest else {
        return Ok(Vec::new());
    };
    let w = config.window_seconds;
    let last_start = latest.timestamp().div_euclid(w) * w;
    let first_start = last_start - (config.horizon as i64 - 1) * w;
    let starts: Vec<DateTime<Utc>> = (0..config.horizon as i64)
        .map(|i| {
            DateTime::<Utc>::from_timestamp(first_start, 0).expect("in range")
                + Duration::seconds(i * w)
        })
        .collect();

    Ok(topics
        .iter()
        .map(|t| {
            let mut counts = vec![0u64; config.horizon];
            for id in &t.member_ids {
                let s = timestamps[id].timestamp();
                if s >= first_start {
                    let idx = ((s - first_start) / w) as usize;
                    if idx < counts.len() {
                        counts[idx] += 1;
                    }
                }
            }
            let slope = trend_slope(&counts);
            TrendSeries {
                topic_id: t.topic_id,
                buckets: starts
                    .iter()
                    .zip(&counts)
                    .map(|(s, c)| TrendBucket {
                        window_start: *s,
                        count: *c,
                    })
                    .collect(),
                slope,
                direction: classify(slope, config.threshold),
            }
        })
        .collect())
}
