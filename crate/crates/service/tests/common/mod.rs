//! Small planted corpora and fast settings shared by the service tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use comment_topics_core::synthetic::{planted_corpus, to_jsonl, PlantedDoc, PlantedSpec};
use comment_topics_service::config::PipelineConfig;
use comment_topics_service::manifest::Stage;
use comment_topics_service::pipeline::{run_pipeline, PipelineRequest, RunOutcome};
use comment_topics_service::store::Store;

pub fn planted(themes: usize, per_theme: usize) -> Vec<PlantedDoc> {
    planted_corpus(&PlantedSpec {
        themes,
        docs_per_theme: per_theme,
        ..Default::default()
    })
}

pub fn write_corpus(dir: &Path, themes: usize, per_theme: usize) -> PathBuf {
    let path = dir.join("comments.jsonl");
    std::fs::write(&path, to_jsonl(&planted(themes, per_theme))).unwrap();
    path
}

/// Settings scaled down for a few hundred documents.
pub fn small_config() -> PipelineConfig {
    let mut c = PipelineConfig::default().with_seed(3);
    c.embedder.dimension = 256;
    c.reduction.output_dims = 5;
    c.reduction.n_neighbors = 15;
    c.reduction.n_epochs = Some(200);
    c.cluster.min_cluster_size = 15;
    c
}

pub fn run(store: &Store, run_id: &str, input: Option<&Path>, config: PipelineConfig) -> RunOutcome {
    run_pipeline(
        store,
        PipelineRequest {
            run_id,
            input,
            config,
            until: Stage::Trends,
        },
    )
    .unwrap()
}

/// A completed run over 6 planted themes in a fresh store.
pub fn completed_run(root: &Path, run_id: &str) -> (Store, RunOutcome) {
    let store = Store::open(root.join("store")).unwrap();
    let input = write_corpus(root, 6, 60);
    let outcome = run(&store, run_id, Some(&input), small_config());
    (store, outcome)
}
