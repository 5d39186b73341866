//! Neighbour-graph embedding (the UMAP construction).
//!
//! Builds a fuzzy k-nearest-neighbour graph in the input space, then lays it
//! out in a low-dimensional space by stochastic gradient descent with
//! negative sampling. The layout loop is single-threaded and driven by one
//! seeded generator, so a fixed seed reproduces the output bit for bit.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::Matrix;

const SMOOTH_K_TOLERANCE: f64 = 1e-5;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const GRAD_CLIP: f32 = 4.0;
const NEGATIVE_SAMPLE_RATE: f64 = 5.0;
const INIT_RANGE: f32 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputMetric {
    #[default]
    Cosine,
    Euclidean,
}

#[derive(Debug, Clone)]
pub(crate) struct LayoutParams {
    pub n_neighbors: usize,
    pub n_components: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub n_epochs: Option<usize>,
    pub metric: InputMetric,
    pub seed: u64,
}

/// Exact k nearest neighbours, the point itself included at position 0.
/// Ties are broken by index.
pub(crate) fn exact_knn(data: &Matrix, k: usize, metric: InputMetric) -> Vec<Vec<(f32, u32)>> {
    let n = data.rows;
    let rows: Vec<Vec<f32>> = match metric {
        InputMetric::Cosine => data
            .iter_rows()
            .map(|r| {
                let norm = r.iter().map(|v| v * v).sum::<f32>().sqrt();
                if norm > 0.0 {
                    r.iter().map(|v| v / norm).collect()
                } else {
                    r.to_vec()
                }
            })
            .collect(),
        InputMetric::Euclidean => data.iter_rows().map(<[f32]>::to_vec).collect(),
    };
    (0..n)
        .into_par_iter()
        .map(|i| {
            let a = &rows[i];
            let mut d: Vec<(f32, u32)> = rows
                .iter()
                .enumerate()
                .map(|(j, b)| {
                    let dist = if i == j {
                        0.0
                    } else {
                        match metric {
                            InputMetric::Cosine => {
                                let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                                (1.0 - dot).max(0.0)
                            }
                            InputMetric::Euclidean => a
                                .iter()
                                .zip(b)
                                .map(|(x, y)| (x - y) * (x - y))
                                .sum::<f32>()
                                .sqrt(),
                        }
                    };
                    (dist, j as u32)
                })
                .collect();
            let cmp = |x: &(f32, u32), y: &(f32, u32)| {
                // Self always first, then by distance, then index.
                (x.1 as usize != i)
                    .cmp(&(y.1 as usize != i))
                    .then(x.0.total_cmp(&y.0))
                    .then(x.1.cmp(&y.1))
            };
            let k = k.min(n);
            if k < n {
                d.select_nth_unstable_by(k - 1, cmp);
                d.truncate(k);
            }
            d.sort_by(cmp);
            d
        })
        .collect()
}

/// Per-point (rho, sigma) so that the fuzzy neighbourhood has log2(k) mass.
fn smooth_knn_dist(knn: &[Vec<(f32, u32)>], k: usize) -> Vec<(f64, f64)> {
    let target = (k as f64).log2();
    let mean_all = {
        let (s, c) = knn
            .iter()
            .flat_map(|r| r.iter())
            .fold((0f64, 0usize), |(s, c), (d, _)| (s + f64::from(*d), c + 1));
        if c == 0 {
            0.0
        } else {
            s / c as f64
        }
    };
    knn.iter()
        .map(|row| {
            let dists: Vec<f64> = row.iter().map(|(d, _)| f64::from(*d)).collect();
            let rho = dists.iter().copied().find(|d| *d > 0.0).unwrap_or(0.0);
            let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
            for _ in 0..64 {
                let psum: f64 = dists[1..]
                    .iter()
                    .map(|d| {
                        let gap = d - rho;
                        if gap > 0.0 {
                            (-gap / mid).exp()
                        } else {
                            1.0
                        }
                    })
                    .sum();
                if (psum - target).abs() < SMOOTH_K_TOLERANCE {
                    break;
                }
                if psum > target {
                    hi = mid;
                    mid = (lo + hi) / 2.0;
                } else {
                    lo = mid;
                    if hi.is_infinite() {
                        mid *= 2.0;
                    } else {
                        mid = (lo + hi) / 2.0;
                    }
                }
            }
            let floor = if rho > 0.0 {
                MIN_K_DIST_SCALE * dists.iter().sum::<f64>() / dists.len() as f64
            } else {
                MIN_K_DIST_SCALE * mean_all
            };
            (rho, mid.max(floor))
        })
        .collect()
}

/// Symmetric fuzzy union of the directed membership graph. Every undirected
/// edge appears in both directions, sorted by (head, tail).
pub(crate) fn fuzzy_graph(knn: &[Vec<(f32, u32)>], k: usize) -> Vec<(u32, u32, f32)> {
    let params = smooth_knn_dist(knn, k);
    let mut directed: HashMap<(u32, u32), f64> = HashMap::new();
    for (i, row) in knn.iter().enumerate() {
        let (rho, sigma) = params[i];
        for &(d, j) in row {
            if j as usize == i {
                continue;
            }
            let gap = f64::from(d) - rho;
            let w = if gap <= 0.0 { 1.0 } else { (-gap / sigma).exp() };
            directed.insert((i as u32, j), w);
        }
    }
    let mut edges: Vec<(u32, u32, f32)> = Vec::with_capacity(directed.len() * 2);
    for (&(i, j), &a) in &directed {
        let b = directed.get(&(j, i)).copied().unwrap_or(0.0);
        let w = a + b - a * b;
        if w <= 0.0 {
            continue;
        }
        edges.push((i, j, w as f32));
        if b == 0.0 {
            edges.push((j, i, w as f32));
        }
    }
    edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    edges
}

/// Fits `1 / (1 + a x^(2b))` to the offset-exponential target curve by
/// Levenberg-Marquardt.
pub(crate) fn fit_ab(spread: f64, min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x < min_dist {
                1.0
            } else {
                (-(x - min_dist) / spread).exp()
            }
        })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut current = sse(a, b);
    for _ in 0..500 {
        // Normal equations J^T J d = -J^T r.
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x == 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let den = 1.0 + a * p;
            let f = 1.0 / den;
            let r = f - y;
            let da = -p / (den * den);
            let db = -a * p * 2.0 * x.ln() / (den * den);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let m00 = jaa * (1.0 + lambda);
        let m11 = jbb * (1.0 + lambda);
        let det = m00 * m11 - jab * jab;
        if det.abs() < 1e-300 {
            break;
        }
        let step_a = -(m11 * ga - jab * gb) / det;
        let step_b = -(m00 * gb - jab * ga) / det;
        let (na, nb) = (a + step_a, b + step_b);
        let candidate = if na > 0.0 && nb > 0.0 {
            sse(na, nb)
        } else {
            f64::INFINITY
        };
        if candidate < current {
            let improvement = current - candidate;
            a = na;
            b = nb;
            current = candidate;
            lambda *= 0.3;
            if improvement < 1e-14 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (a, b)
}

pub(crate) fn default_epochs(n: usize) -> usize {
    if n <= 10_000 {
        500
    } else {
        200
    }
}

/// Runs the full reduction on rows already in canonical order.
pub(crate) fn layout(data: &Matrix, params: &LayoutParams) -> Matrix {
    let n = data.rows;
    let dim = params.n_components;
    let knn = exact_knn(data, params.n_neighbors, params.metric);
    let graph = fuzzy_graph(&knn, params.n_neighbors);
    let (a, b) = fit_ab(params.spread, params.min_dist);
    let n_epochs = params.n_epochs.unwrap_or_else(|| default_epochs(n));

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut emb = Matrix::zeros(n, dim);
    for v in emb.data.iter_mut() {
        *v = rng.random_range(-INIT_RANGE..INIT_RANGE);
    }

    let max_w = graph.iter().map(|e| e.2).fold(0f32, f32::max);
    let floor = max_w / n_epochs as f32;
    let edges: Vec<(usize, usize, f64)> = graph
        .into_iter()
        .filter(|e| e.2 >= floor && e.2 > 0.0)
        .map(|(i, j, w)| (i as usize, j as usize, f64::from(max_w / w)))
        .collect();
    if edges.is_empty() || n_epochs == 0 {
        return emb;
    }

    let eps: Vec<f64> = edges.iter().map(|e| e.2).collect();
    let eps_neg: Vec<f64> = eps.iter().map(|e| e / NEGATIVE_SAMPLE_RATE).collect();
    let mut next_sample = eps.clone();
    let mut next_neg = eps_neg.clone();
    let (a, b) = (a as f32, b as f32);
    let initial_alpha = 1.0f32;
    let mut alpha = initial_alpha;
    let mut cur = vec![0f32; dim];

    for epoch in 0..n_epochs {
        let e = epoch as f64;
        for (idx, &(head, tail, _)) in edges.iter().enumerate() {
            if next_sample[idx] > e {
                continue;
            }
            cur.copy_from_slice(emb.row(head));
            let dist_sq = sq_dist(&cur, emb.row(tail));
            let coeff = if dist_sq > 0.0 {
                -2.0 * a * b * dist_sq.powf(b - 1.0) / (a * dist_sq.powf(b) + 1.0)
            } else {
                0.0
            };
            {
                let other = emb.row_mut(tail);
                for d in 0..dim {
                    let g = (coeff * (cur[d] - other[d])).clamp(-GRAD_CLIP, GRAD_CLIP) * alpha;
                    cur[d] += g;
                    other[d] -= g;
                }
            }
            next_sample[idx] += eps[idx];

            let n_neg = ((e - next_neg[idx]) / eps_neg[idx]).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let k = rng.random_range(0..n);
                if k == head {
                    continue;
                }
                let other = emb.row(k);
                let dist_sq = sq_dist(&cur, other);
                if dist_sq > 0.0 {
                    let coeff = 2.0 * b / ((0.001 + dist_sq) * (a * dist_sq.powf(b) + 1.0));
                    for d in 0..dim {
                        let g = (coeff * (cur[d] - other[d])).clamp(-GRAD_CLIP, GRAD_CLIP);
                        cur[d] += g * alpha;
                    }
                } else {
                    for c in cur.iter_mut() {
                        *c += GRAD_CLIP * alpha;
                    }
                }
            }
            next_neg[idx] += n_neg as f64 * eps_neg[idx];
            emb.row_mut(head).copy_from_slice(&cur);
        }
        alpha = initial_alpha * (1.0 - (epoch + 1) as f32 / n_epochs as f32);
    }
    emb
}

fn sq_dist(x: &[f32], y: &[f32]) -> f32 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}
