mod support;

use std::collections::{BTreeMap, HashSet};

use comment_topics_core::clustering::{cluster, reduce, ClusterConfig, ReducedMatrix, ReductionConfig, Selection};
use comment_topics_core::embedding::{EmbeddingMatrix, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::clustering::{canonical, check_invariants, corpus, matrix};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn clusters_obey_size_probability_and_partition_laws(
        seed in any::<u64>(),
        min_size in 2usize..16,
        leaf in any::<bool>(),
        min_samples in prop::option::of(1usize..10),
    ) {
        let c = corpus(seed);
        let cfg = ClusterConfig {
            min_cluster_size: min_size,
            selection: if leaf { Selection::Leaf } else { Selection::ExcessOfMass },
            min_samples,
        };
        let out = cluster(&matrix(&c), &cfg).unwrap();
        if let Err(e) = check_invariants(&c.ids, &out, min_size) {
            prop_assert!(false, "{}", e);
        }

        // Reversing row order gives the same labelling per document.
        let mut rev = c.clone();
        rev.ids.reverse();
        rev.rows.reverse();
        let out_rev = cluster(&matrix(&rev), &cfg).unwrap();
        prop_assert_eq!(canonical(&out), canonical(&out_rev));
    }
}

#[test]
fn separated_blobs_become_separate_clusters() {
    let mut rows = Vec::new();
    let mut ids = Vec::new();
    for (b, cx) in [0.0f32, 100.0, 200.0].iter().enumerate() {
        for i in 0..25 {
            let t = i as f32 * 2.4;
            rows.push(vec![cx + (i as f32 / 5.0) * t.cos(), (i as f32 / 5.0) * t.sin()]);
            ids.push(format!("b{b}-{i:02}"));
        }
    }
    let m = ReducedMatrix::new(ids.clone(), Matrix::from_rows(&rows, 2).unwrap()).unwrap();
    for selection in [Selection::Leaf, Selection::ExcessOfMass] {
        let cfg = ClusterConfig {
            min_cluster_size: 5,
            selection,
            min_samples: None,
        };
        let out = cluster(&m, &cfg).unwrap();
        let mut blob_labels: BTreeMap<&str, HashSet<i64>> = BTreeMap::new();
        for a in out.iter().filter(|a| !a.is_noise()) {
            blob_labels.entry(&a.doc_id[..2]).or_default().insert(a.label);
        }
        let all: HashSet<i64> = blob_labels.values().flatten().copied().collect();
        assert_eq!(blob_labels.len(), 3, "{selection:?}");
        assert_eq!(all.len(), 3, "{selection:?}: blobs must not share labels");
        assert!(out.iter().filter(|a| a.is_noise()).count() <= 10);
    }
}

#[test]
fn all_noise_is_a_valid_result() {
    let rows: Vec<Vec<f32>> = (0..6).map(|i| vec![i as f32 * 100.0, 0.0]).collect();
    let ids: Vec<String> = (0..6).map(|i| format!("d{i}")).collect();
    let m = ReducedMatrix::new(ids, Matrix::from_rows(&rows, 2).unwrap()).unwrap();
    let cfg = ClusterConfig {
        min_cluster_size: 10,
        ..Default::default()
    };
    let out = cluster(&m, &cfg).unwrap();
    assert!(out.iter().all(|a| a.is_noise() && a.probability == 0.0));
}

fn embedding_fixture(n: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|i| {
            let group = (i % 3) as f32;
            (0..12).map(|d| if d % 3 == group as usize { 1.0 } else { 0.0 } + rng.random_range(-0.2..0.2)).collect()
        })
        .collect();
    let ids = (0..n).map(|i| format!("doc-{i:04}")).collect();
    EmbeddingMatrix::new(ids, Matrix::from_rows(&rows, 12).unwrap(), "fixture").unwrap()
}

#[test]
fn reduction_is_deterministic_and_order_independent() {
    let m = embedding_fixture(90, 3);
    let cfg = ReductionConfig {
        output_dims: 3,
        n_neighbors: 10,
        seed: 11,
        ..Default::default()
    };
    let a = reduce(&m, &cfg).unwrap();
    let b = reduce(&m, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.points.cols, 3);
    assert!(a.points.first_non_finite().is_none());

    let mut order: Vec<usize> = (0..m.len()).collect();
    order.reverse();
    let rows: Vec<Vec<f32>> = order.iter().map(|&i| m.vectors.row(i).to_vec()).collect();
    let ids: Vec<String> = order.iter().map(|&i| m.ids[i].clone()).collect();
    let shuffled = EmbeddingMatrix::new(ids, Matrix::from_rows(&rows, 12).unwrap(), "fixture").unwrap();
    let c = reduce(&shuffled, &cfg).unwrap();
    for (k, &i) in order.iter().enumerate() {
        assert_eq!(c.ids[k], a.ids[i]);
        assert_eq!(c.points.row(k), a.points.row(i));
    }

    let other = reduce(&m, &ReductionConfig { seed: 12, ..cfg.clone() }).unwrap();
    assert_ne!(a.points, other.points);
}

#[test]
fn reduced_groups_stay_apart() {
    let m = embedding_fixture(120, 5);
    let cfg = ReductionConfig {
        output_dims: 2,
        n_neighbors: 15,
        ..Default::default()
    };
    let r = reduce(&m, &cfg).unwrap();
    let out = cluster(
        &r,
        &ClusterConfig {
            min_cluster_size: 10,
            ..Default::default()
        },
    )
    .unwrap();
    let mut by_label: BTreeMap<i64, HashSet<usize>> = BTreeMap::new();
    for (i, a) in out.iter().enumerate() {
        if !a.is_noise() {
            by_label.entry(a.label).or_default().insert(i % 3);
        }
    }
    assert!(by_label.len() >= 3, "{by_label:?}");
    assert!(by_label.values().all(|g| g.len() == 1), "{by_label:?}");
}
