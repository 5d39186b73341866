//! Random small corpora for clustering and the laws every clustering
//! result must obey.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use comment_topics_core::clustering::{ClusterAssignment, ReducedMatrix, NOISE};
use comment_topics_core::embedding::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Corpus {
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f32>>,
    pub dims: usize,
}

/// Random blobs plus uniform background points.
pub fn corpus(seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = rng.random_range(2..=5);
    let blobs = rng.random_range(1..=5);
    let mut rows: Vec<Vec<f32>> = Vec::new();
    for _ in 0..blobs {
        let center: Vec<f32> = (0..dims).map(|_| rng.random_range(-50.0..50.0)).collect();
        let spread = rng.random_range(0.5..6.0);
        for _ in 0..rng.random_range(3..40) {
            rows.push(center.iter().map(|c| c + rng.random_range(-spread..spread)).collect());
        }
    }
    for _ in 0..rng.random_range(0..20) {
        rows.push((0..dims).map(|_| rng.random_range(-60.0..60.0)).collect());
    }
    // Exact duplicates exercise zero distances.
    if rng.random_bool(0.3) {
        let r = rows[0].clone();
        rows.push(r);
    }
    let ids = (0..rows.len()).map(|_| format!("{:08x}", rng.random::<u32>())).collect::<Vec<_>>();
    let mut seen = HashSet::new();
    let ids = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| if seen.insert(id.clone()) { id } else { format!("{id}-{i}") })
        .collect();
    Corpus { ids, rows, dims }
}

pub fn matrix(c: &Corpus) -> ReducedMatrix {
    ReducedMatrix::new(c.ids.clone(), Matrix::from_rows(&c.rows, c.dims).unwrap()).unwrap()
}

pub fn check_invariants(ids: &[String], out: &[ClusterAssignment], min_size: usize) -> Result<(), String> {
    if out.len() != ids.len() {
        return Err(format!("{} assignments for {} docs", out.len(), ids.len()));
    }
    for (a, id) in out.iter().zip(ids) {
        if &a.doc_id != id {
            return Err(format!("row order changed at {id}"));
        }
    }
    let mut sizes: BTreeMap<i64, usize> = BTreeMap::new();
    let mut top: BTreeMap<i64, f64> = BTreeMap::new();
    for a in out {
        if !(0.0..=1.0).contains(&a.probability) {
            return Err(format!("{} has probability {}", a.doc_id, a.probability));
        }
        if a.label == NOISE {
            if a.probability != 0.0 {
                return Err(format!("noise {} has probability {}", a.doc_id, a.probability));
            }
            continue;
        }
        if a.label < 0 {
            return Err(format!("bad label {}", a.label));
        }
        *sizes.entry(a.label).or_default() += 1;
        let m = top.entry(a.label).or_insert(0.0);
        *m = m.max(a.probability);
    }
    let labels: Vec<i64> = sizes.keys().copied().collect();
    if labels != (0..labels.len() as i64).collect::<Vec<_>>() {
        return Err(format!("labels not contiguous: {labels:?}"));
    }
    let by_label: Vec<usize> = sizes.values().copied().collect();
    if by_label.windows(2).any(|w| w[0] < w[1]) {
        return Err(format!("sizes not descending: {by_label:?}"));
    }
    if let Some((l, s)) = sizes.iter().find(|(_, s)| **s < min_size) {
        return Err(format!("cluster {l} has {s} < {min_size} members"));
    }
    if let Some((l, p)) = top.iter().find(|(_, p)| **p != 1.0) {
        return Err(format!("cluster {l} peaks at probability {p}"));
    }
    Ok(())
}

pub fn canonical(out: &[ClusterAssignment]) -> BTreeMap<String, (i64, u64)> {
    out.iter()
        .map(|a| (a.doc_id.clone(), (a.label, a.probability.to_bits())))
        .collect()
}
