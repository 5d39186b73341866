//! Dimensionality reduction and density clustering of document vectors.
//!
//! Both stages sort their input rows by document id before running, so the
//! output for a given set of (id, vector) pairs does not depend on row order.

mod density;
mod reduction;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingMatrix, Matrix};
use crate::error::{Error, Result};

pub use reduction::InputMetric;

pub const NOISE: i64 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReductionConfig {
    pub output_dims: usize,
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub seed: u64,
    #[serde(default)]
    pub metric: InputMetric,
    /// Optimisation epochs; 500 up to 10k rows and 200 beyond when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_epochs: Option<usize>,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            output_dims: 20,
            n_neighbors: 100,
            min_dist: 0.0,
            seed: 42,
            metric: InputMetric::Cosine,
            n_epochs: None,
        }
    }
}

impl ReductionConfig {
    fn validate(&self, rows: usize, input_dims: usize) -> Result<()> {
        if self.n_neighbors < 2 {
            return Err(Error::Config("n_neighbors must be at least 2".into()));
        }
        if !(self.min_dist >= 0.0) {
            return Err(Error::Config("min_dist must be non-negative".into()));
        }
        if self.output_dims == 0 || self.output_dims >= input_dims {
            return Err(Error::Config(format!(
                "output_dims {} must be positive and below the input width {input_dims}",
                self.output_dims
            )));
        }
        if rows <= self.n_neighbors {
            return Err(Error::Input(format!(
                "reduction needs more than n_neighbors={} documents, got {rows}; \
                 ingest more comments or lower n_neighbors",
                self.n_neighbors
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Finest clusters of the condensed tree.
    #[default]
    Leaf,
    ExcessOfMass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub min_cluster_size: usize,
    pub selection: Selection,
    /// Neighbourhood size for core distances; defaults to `min_cluster_size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_samples: Option<usize>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            min_cluster_size: 30,
            selection: Selection::Leaf,
            min_samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub doc_id: String,
    pub label: i64,
    pub probability: f64,
}

impl ClusterAssignment {
    pub fn is_noise(&self) -> bool {
        self.label == NOISE
    }
}

/// Reduced document vectors, same id order as the source matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedMatrix {
    pub ids: Vec<String>,
    pub points: Matrix,
}

impl ReducedMatrix {
    pub fn new(ids: Vec<String>, points: Matrix) -> Result<Self> {
        if ids.len() != points.rows {
            return Err(Error::Input(format!(
                "{} ids for {} rows",
                ids.len(),
                points.rows
            )));
        }
        Ok(ReducedMatrix { ids, points })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn to_embedding_matrix(&self, model_name: &str) -> Result<EmbeddingMatrix> {
        EmbeddingMatrix::new(self.ids.clone(), self.points.clone(), model_name)
    }
}

fn canonical_order(ids: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    order
}

fn permute_rows(m: &Matrix, order: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(order.len(), m.cols);
    for (dst, &src) in order.iter().enumerate() {
        out.row_mut(dst).copy_from_slice(m.row(src));
    }
    out
}

fn unpermute_rows(m: &Matrix, order: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(order.len(), m.cols);
    for (src, &dst) in order.iter().enumerate() {
        out.row_mut(dst).copy_from_slice(m.row(src));
    }
    out
}

/// Reduces document vectors to `output_dims` columns.
pub fn reduce(matrix: &EmbeddingMatrix, config: &ReductionConfig) -> Result<ReducedMatrix> {
    config.validate(matrix.len(), matrix.dimension())?;
    let order = canonical_order(&matrix.ids);
    let input = permute_rows(&matrix.vectors, &order);
    let params = reduction::LayoutParams {
        n_neighbors: config.n_neighbors,
        n_components: config.output_dims,
        min_dist: config.min_dist,
        spread: 1.0,
        n_epochs: config.n_epochs,
        metric: config.metric,
        seed: config.seed,
    };
    let out = reduction::layout(&input, &params);
    if let Some(row) = out.first_non_finite() {
        return Err(Error::Input(format!("reduction diverged at row {row}")));
    }
    ReducedMatrix::new(matrix.ids.clone(), unpermute_rows(&out, &order))
}

/// Two-dimensional layout for scatter plots, using the reference
/// neighbourhood parameters.
pub fn project_2d(matrix: &EmbeddingMatrix, seed: u64) -> Result<ReducedMatrix> {
    project_2d_with(
        matrix,
        &ReductionConfig {
            output_dims: 2,
            seed,
            ..Default::default()
        },
    )
}

pub fn project_2d_with(matrix: &EmbeddingMatrix, config: &ReductionConfig) -> Result<ReducedMatrix> {
    reduce(
        matrix,
        &ReductionConfig {
            output_dims: 2,
            ..config.clone()
        },
    )
}

/// Density clustering in the reduced space (Euclidean).
///
/// Labels are renumbered by descending cluster size, ties going to the
/// cluster holding the smallest doc id. An all-noise result is valid and
/// only logged.
pub fn cluster(reduced: &ReducedMatrix, config: &ClusterConfig) -> Result<Vec<ClusterAssignment>> {
    if reduced.is_empty() {
        return Err(Error::Input("cannot cluster an empty matrix".into()));
    }
    if config.min_cluster_size < 2 {
        return Err(Error::Config("min_cluster_size must be at least 2".into()));
    }
    if let Some(row) = reduced.points.first_non_finite() {
        return Err(Error::Input(format!("reduced row {row} is not finite")));
    }
    let order = canonical_order(&reduced.ids);
    let points = permute_rows(&reduced.points, &order);
    let min_samples = config.min_samples.unwrap_or(config.min_cluster_size).max(1);
    let result = density::hdbscan(&points, config.min_cluster_size, min_samples, config.selection);

    // Canonical index -> raw node, then renumber.
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (ci, node) in result.cluster_of.iter().enumerate() {
        if let Some(node) = node {
            members.entry(*node).or_default().push(ci);
        }
    }
    let mut clusters: Vec<(usize, Vec<usize>)> = members.into_iter().collect();
    // Canonical indices are sorted by id, so the first member has the smallest id.
    clusters.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.1[0].cmp(&b.1[0])));

    let mut label = vec![NOISE; points.rows];
    for (new_label, (_, idx)) in clusters.iter().enumerate() {
        for &ci in idx {
            label[ci] = new_label as i64;
        }
    }
    if clusters.is_empty() {
        log::warn!("clustering produced no topics; every document is noise");
    }

    let mut out = vec![None; reduced.len()];
    for (ci, &src) in order.iter().enumerate() {
        let noise = label[ci] == NOISE;
        out[src] = Some(ClusterAssignment {
            doc_id: reduced.ids[src].clone(),
            label: label[ci],
            probability: if noise { 0.0 } else { result.probability[ci] },
        });
    }
    Ok(out.into_iter().map(|a| a.expect("every row assigned")).collect())
}

pub fn write_assignments<W: Write>(w: W, assignments: &[ClusterAssignment]) -> Result<()> {
    crate::jsonl::write(w, assignments)
}

pub fn read_assignments<R: BufRead>(r: R) -> Result<Vec<ClusterAssignment>> {
    crate::jsonl::read(r)
}

pub fn save_assignments(path: &Path, assignments: &[ClusterAssignment]) -> Result<()> {
    crate::jsonl::save(path, assignments)
}

pub fn load_assignments(path: &Path) -> Result<Vec<ClusterAssignment>> {
    crate::jsonl::load(path)
}
