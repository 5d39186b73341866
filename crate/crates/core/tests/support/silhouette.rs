//! Brute-force silhouette reference.

#![allow(dead_code)]

use std::collections::BTreeSet;

use comment_topics_core::embedding::Matrix;

/// Direct transcription of the definition, no shared code with the library.
pub fn brute_silhouette(points: &[Vec<f64>], labels: &[i64]) -> f64 {
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let clusters: BTreeSet<i64> = labels.iter().copied().filter(|l| *l >= 0).collect();
    let mut total = 0.0;
    let mut n = 0;
    for i in 0..points.len() {
        if labels[i] < 0 {
            continue;
        }
        n += 1;
        let own: Vec<usize> = (0..points.len()).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| d(&points[i], &points[j])).sum::<f64>() / own.len() as f64;
        let mut b = f64::INFINITY;
        for &c in clusters.iter().filter(|c| **c != labels[i]) {
            let other: Vec<usize> = (0..points.len()).filter(|&j| labels[j] == c).collect();
            b = b.min(other.iter().map(|&j| d(&points[i], &points[j])).sum::<f64>() / other.len() as f64);
        }
        if a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}

pub fn to_matrix(points: &[Vec<f64>]) -> Matrix {
    let rows: Vec<Vec<f32>> = points.iter().map(|p| p.iter().map(|x| *x as f32).collect()).collect();
    Matrix::from_rows(&rows, points[0].len()).unwrap()
}
