//! Hierarchical density-based clustering (HDBSCAN).
//!
//! Mutual-reachability minimum spanning tree, single-linkage hierarchy,
//! condensed tree, then flat extraction by leaf or excess-of-mass selection.

use rayon::prelude::*;

use super::Selection;
use crate::embedding::Matrix;

/// One edge of the condensed tree. `child < n_points` denotes a point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CondensedRow {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub size: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct DensityResult {
    /// Selected condensed-tree node per point, `None` for noise.
    pub cluster_of: Vec<Option<usize>>,
    pub probability: Vec<f64>,
}

fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = f64::from(*x) - f64::from(*y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Distance to the `min_samples`-th nearest point, counting the point itself.
pub(crate) fn core_distances(points: &Matrix, min_samples: usize) -> Vec<f64> {
    let n = points.rows;
    let k = min_samples.clamp(1, n.max(1));
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .map(|j| euclidean(points.row(i), points.row(j)))
                .collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect()
}

/// Prim's algorithm on the dense mutual-reachability graph.
fn mst(points: &Matrix, core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = points.rows;
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut source = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_d = f64::INFINITY;
        let cur_row = points.row(current);
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = euclidean(cur_row, points.row(j))
                .max(core[current])
                .max(core[j]);
            if d < best[j] {
                best[j] = d;
                source[j] = current;
            }
            if best[j] < next_d || next == usize::MAX {
                next_d = best[j];
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((source[next], next, next_d));
        current = next;
    }
    edges.sort_by(|x, y| x.2.total_cmp(&y.2));
    edges
}

/// Single-linkage merges: row `i` creates node `n + i` from two children.
pub(crate) struct Linkage {
    left: Vec<usize>,
    right: Vec<usize>,
    distance: Vec<f64>,
    size: Vec<usize>,
}

fn single_linkage(n: usize, edges: &[(usize, usize, f64)]) -> Linkage {
    let total = 2 * n - 1;
    let mut parent: Vec<usize> = (0..total).collect();
    let mut size = vec![1usize; total];
    let mut link = Linkage {
        left: Vec::with_capacity(n - 1),
        right: Vec::with_capacity(n - 1),
        distance: Vec::with_capacity(n - 1),
        size: Vec::with_capacity(n - 1),
    };
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        while parent[x] != root {
            let next = parent[x];
            parent[x] = root;
            x = next;
        }
        root
    }
    for (i, &(a, b, d)) in edges.iter().enumerate() {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        let node = n + i;
        parent[ra] = node;
        parent[rb] = node;
        size[node] = size[ra] + size[rb];
        link.left.push(ra);
        link.right.push(rb);
        link.distance.push(d);
        link.size.push(size[node]);
    }
    link
}

impl Linkage {
    fn node_size(&self, n: usize, node: usize) -> usize {
        if node < n {
            1
        } else {
            self.size[node - n]
        }
    }

    fn leaves_under(&self, n: usize, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                stack.push(self.right[x - n]);
                stack.push(self.left[x - n]);
            }
        }
        out
    }
}

fn lambda_of(d: f64) -> f64 {
    if d > 0.0 {
        1.0 / d
    } else {
        f64::INFINITY
    }
}

/// Condensed tree. Cluster nodes are numbered from `n` (the root) upward in
/// creation order, so every parent id is smaller than its children's.
pub(crate) fn condense(n: usize, link: &Linkage, min_cluster_size: usize) -> Vec<CondensedRow> {
    let mut rows = Vec::new();
    if n < 2 {
        return rows;
    }
    let root = 2 * n - 2;
    let mut label_of = vec![usize::MAX; 2 * n - 1];
    label_of[root] = n;
    let mut next_label = n + 1;
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        if node < n {
            continue;
        }
        let i = node - n;
        let (l, r) = (link.left[i], link.right[i]);
        let lambda = lambda_of(link.distance[i]);
        let (ls, rs) = (link.node_size(n, l), link.node_size(n, r));
        let parent = label_of[node];
        let big_l = ls >= min_cluster_size;
        let big_r = rs >= min_cluster_size;
        match (big_l, big_r) {
            (true, true) => {
                for (child, size) in [(l, ls), (r, rs)] {
                    label_of[child] = next_label;
                    rows.push(CondensedRow {
                        parent,
                        child: next_label,
                        lambda,
                        size,
                    });
                    next_label += 1;
                    queue.push_back(child);
                }
            }
            (false, false) => {
                for child in [l, r] {
                    for p in link.leaves_under(n, child) {
                        rows.push(CondensedRow {
                            parent,
                            child: p,
                            lambda,
                            size: 1,
                        });
                    }
                }
            }
            (true, false) | (false, true) => {
                let (keep, drop) = if big_l { (l, r) } else { (r, l) };
                label_of[keep] = parent;
                queue.push_back(keep);
                for p in link.leaves_under(n, drop) {
                    rows.push(CondensedRow {
                        parent,
                        child: p,
                        lambda,
                        size: 1,
                    });
                }
            }
        }
    }
    rows
}

/// Excess-of-mass stability per cluster node, indexed by `node - n`.
fn stabilities(n: usize, rows: &[CondensedRow], n_clusters: usize) -> Vec<f64> {
    let mut birth = vec![0f64; n_clusters];
    for r in rows.iter().filter(|r| r.child >= n) {
        birth[r.child - n] = r.lambda;
    }
    let mut stability = vec![0f64; n_clusters];
    for r in rows {
        let gain = r.lambda - birth[r.parent - n];
        stability[r.parent - n] += gain * r.size as f64;
    }
    stability
}

fn select(n: usize, rows: &[CondensedRow], selection: Selection) -> Vec<bool> {
    let n_clusters = rows
        .iter()
        .map(|r| r.parent.max(if r.child >= n { r.child } else { 0 }))
        .max()
        .map_or(1, |m| m - n + 1);
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for r in rows.iter().filter(|r| r.child >= n) {
        children[r.parent - n].push(r.child - n);
    }
    let mut selected = vec![false; n_clusters];
    match selection {
        Selection::Leaf => {
            for c in 1..n_clusters {
                selected[c] = children[c].is_empty();
            }
        }
        Selection::ExcessOfMass => {
            let mut stability = stabilities(n, rows, n_clusters);
            // Children have larger ids than their parents, so a reverse sweep
            // settles every subtree before its root. The root is never chosen.
            for c in (1..n_clusters).rev() {
                let subtree: f64 = children[c].iter().map(|&k| stability[k]).sum();
                if subtree > stability[c] {
                    stability[c] = subtree;
                } else {
                    selected[c] = true;
                    let mut stack = children[c].clone();
                    while let Some(k) = stack.pop() {
                        selected[k] = false;
                        stack.extend_from_slice(&children[k]);
                    }
                }
            }
        }
    }
    selected
}

/// Clusters rows of `points`. Ties are resolved by row index, so callers
/// wanting order-independence should pass rows in a canonical order.
pub(crate) fn hdbscan(
    points: &Matrix,
    min_cluster_size: usize,
    min_samples: usize,
    selection: Selection,
) -> DensityResult {
    let n = points.rows;
    if n < 2 {
        return DensityResult {
            cluster_of: vec![None; n],
            probability: vec![0.0; n],
        };
    }
    let core = core_distances(points, min_samples);
    let edges = mst(points, &core);
    let link = single_linkage(n, &edges);
    let rows = condense(n, &link, min_cluster_size);
    let selected = select(n, &rows, selection);

    // Walk each point up through unselected clusters.
    let mut up = vec![usize::MAX; selected.len()];
    let mut point_parent = vec![0usize; n];
    let mut point_lambda = vec![0f64; n];
    for r in &rows {
        if r.child >= n {
            up[r.child - n] = r.parent - n;
        } else {
            point_parent[r.child] = r.parent - n;
            point_lambda[r.child] = r.lambda;
        }
    }
    let owner = |mut c: usize| -> Option<usize> {
        loop {
            if selected[c] {
                return Some(c);
            }
            if up[c] == usize::MAX {
                return None;
            }
            c = up[c];
        }
    };
    let cluster_of: Vec<Option<usize>> = (0..n).map(|p| owner(point_parent[p])).collect();

    let mut max_lambda = vec![0f64; selected.len()];
    for p in 0..n {
        if let Some(c) = cluster_of[p] {
            max_lambda[c] = max_lambda[c].max(point_lambda[p]);
        }
    }
    let probability = (0..n)
        .map(|p| match cluster_of[p] {
            None => 0.0,
            Some(c) => {
                let lam = point_lambda[p];
                let top = max_lambda[c];
                if top == 0.0 || !lam.is_finite() {
                    1.0
                } else {
                    lam.min(top) / top
                }
            }
        })
        .collect();
    DensityResult {
        cluster_of: cluster_of.into_iter().map(|c| c.map(|c| c + n)).collect(),
        probability,
    }
}
