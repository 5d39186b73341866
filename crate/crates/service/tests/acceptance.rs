//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

#[path = "../../core/tests/support/clustering.rs"]
mod clustering_support;
#[path = "../../core/tests/support/sampling.rs"]
mod sampling_support;
#[path = "../../core/tests/support/silhouette.rs"]
mod silhouette_support;
#[path = "../../core/tests/support/tables.rs"]
mod tables;
mod common;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::time::{Duration, Instant};

use comment_topics_core::clustering::{cluster, ClusterConfig, Selection};
use comment_topics_core::evaluation::{
    sample_assignment_tasks, sample_expert_forms, sample_intruder_tasks, score_choice_tasks, score_expert_labels,
    AssignmentSampling, TaskRecord, TABLE_ATTRIBUTES,
};
use comment_topics_core::jsonl;
use comment_topics_core::synthetic::{planted_corpus, to_jsonl, PlantedSpec};
use comment_topics_core::topics::{corpus_stats, silhouette, summary_consistent, Space, Topic};
use comment_topics_service::config::PipelineConfig;
use comment_topics_service::files::sha256_file;
use comment_topics_service::manifest::{Stage, MANIFEST_FILE};
use comment_topics_service::store::Store;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok { Ok(detail) } else { Err(detail) }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Check {
    ensure(elapsed < limit, format!("{detail}; limit {:.0?}", limit))
}

fn choice_rates() -> Check {
    let started = Instant::now();
    let (tasks, ann) = tables::intruder_fixture(190, 7, 3);
    let a = score_choice_tasks(&tasks, &ann);
    let (tasks, ann) = tables::assignment_fixture(1968, 21, 11);
    let b = score_choice_tasks(&tasks, &ann);
    let got = [&a.both_correct, &a.one_correct, &a.both_incorrect, &b.both_correct, &b.one_correct, &b.both_incorrect]
        .map(|r| r.percent(1));
    let want = ["95.0", "3.5", "1.5", "98.4", "1.1", "0.6"];
    let detail = format!("{} units / {} units -> {}", a.units, b.units, got.join("/"));
    if got != want || a.units != 200 || b.units != 2000 {
        return Err(detail);
    }
    within(started.elapsed(), Duration::from_secs(1), detail)
}

fn expert_agreement() -> Check {
    let started = Instant::now();
    let (forms, ann, adj) = tables::expert_fixture(tables::TABLE_FORMS, &tables::table_plan());
    let r = score_expert_labels(&forms, &ann, &adj, &TABLE_ATTRIBUTES).map_err(|e| e.to_string())?;
    let non_null: Vec<u64> = r.attributes.iter().map(|a| a.non_null.count).collect();
    let agreement: Vec<String> = r.attributes.iter().map(|a| a.agreement.percent(0)).collect();
    let detail = format!(
        "non-null {non_null:?}, agreement {}%, total {} ({}%), overall {}%",
        agreement.join("/"),
        r.total_non_null.count,
        r.total_non_null.percent(0),
        r.overall_agreement.percent(0)
    );
    let ok = non_null == [177, 145, 122, 195]
        && agreement == ["97", "87", "97", "84"]
        && r.total_non_null.count == 639
        && r.total_non_null.percent(0) == "80"
        && r.overall_agreement.percent(0) == "91"
        && r.incomplete.is_empty();
    if !ok {
        return Err(detail);
    }
    within(started.elapsed(), Duration::from_secs(1), detail)
}

fn stats_consistency() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for fixture in 0..1000 {
        let n = rng.random_range(1..80usize);
        let sizes: Vec<usize> = (0..n).map(|_| rng.random_range(2..2000)).collect();
        let sum: usize = sizes.iter().sum();
        let corpus = sum + rng.random_range(0..100_000);
        let topics: Vec<Topic> = sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| Topic {
                topic_id: i as i64,
                member_ids: Vec::new(),
                size: s,
                representative_id: String::new(),
                name: None,
                theme: None,
            })
            .collect();
        let s = corpus_stats(&topics, corpus).map_err(|e| e.to_string())?;
        let by_mean = (s.n_topics as f64 * s.mean_size).round() as usize;
        let by_coverage = (s.coverage * corpus as f64).round() as usize;
        if !(s.assigned == sum && by_mean == sum && by_coverage == sum && s.is_consistent()) {
            return Err(format!("fixture {fixture}: sum {sum}, n*mean {by_mean}, coverage*corpus {by_coverage}"));
        }
    }
    let triple = summary_consistent(425.0, 76.0, 0.23, 138_639.0, 0.02);
    let gap = (425.0 * 76.0 - 0.23 * 138_639.0f64).abs() / (425.0 * 76.0);
    ensure(triple, format!("1000 fixtures exact; summary triple (425, 76, 0.23, 138639) off by {:.2}% (slack 2%)", gap * 100.0))
}

fn planted_recovery() -> Check {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let docs = planted_corpus(&PlantedSpec {
        themes: 20,
        docs_per_theme: 150,
        ..Default::default()
    });
    let input = tmp.path().join("comments.jsonl");
    std::fs::write(&input, to_jsonl(&docs)).map_err(|e| e.to_string())?;
    let config = PipelineConfig::default();
    let params = (
        config.reduction.output_dims,
        config.reduction.n_neighbors,
        config.reduction.min_dist,
        config.cluster.min_cluster_size,
        config.cluster.selection,
        config.embedder.backend_id.clone(),
    );
    if params != (20, 100, 0.0, 30, Selection::Leaf, "hashing".to_string()) {
        return Err(format!("default parameters drifted: {params:?}"));
    }
    let store = Store::open(tmp.path().join("store")).map_err(|e| e.to_string())?;
    common::run(&store, "planted", Some(&input), config);
    let run = store.load_run("planted").map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();

    let theme: HashMap<&str, usize> = docs.iter().map(|d| (d.comment.id.as_str(), d.theme)).collect();
    let purities: Vec<f64> = run
        .topics
        .iter()
        .map(|t| {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for m in &t.member_ids {
                *counts.entry(theme[m.as_str()]).or_default() += 1;
            }
            *counts.values().max().unwrap() as f64 / t.size as f64
        })
        .collect();
    let mean = purities.iter().sum::<f64>() / purities.len().max(1) as f64;
    let detail = format!(
        "{} docs, {} clusters, mean purity {:.1}%, {:.1?}",
        docs.len(),
        run.topics.len(),
        mean * 100.0,
        elapsed
    );
    if run.topics.len() < 18 || mean < 0.9 {
        return Err(detail);
    }
    within(elapsed, Duration::from_secs(120), detail)
}

fn clustering_invariants() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut clusters = 0;
    for case in 0..200 {
        let c = clustering_support::corpus(rng.random());
        let min_size = rng.random_range(2..16);
        let cfg = ClusterConfig {
            min_cluster_size: min_size,
            selection: if rng.random_bool(0.5) { Selection::Leaf } else { Selection::ExcessOfMass },
            min_samples: None,
        };
        let out = cluster(&clustering_support::matrix(&c), &cfg).map_err(|e| e.to_string())?;
        clustering_support::check_invariants(&c.ids, &out, min_size).map_err(|e| format!("corpus {case}: {e}"))?;
        clusters += out.iter().map(|a| a.label + 1).max().unwrap_or(0);
    }
    within(
        started.elapsed(),
        Duration::from_secs(60),
        format!("200 corpora, {clusters} clusters checked in {:.1?}", started.elapsed()),
    )
}

fn silhouette_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut scored = 0;
    for _ in 0..500 {
        let n = rng.random_range(2..=50);
        let dims = rng.random_range(1..=4);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dims).map(|_| f64::from(rng.random_range(-800i32..800)) / 8.0).collect())
            .collect();
        let labels: Vec<i64> = (0..n).map(|_| rng.random_range(-1..4)).collect();
        if let Ok(r) = silhouette(&silhouette_support::to_matrix(&points), &labels, Space::Reduced) {
            worst = worst.max((r.coefficient - silhouette_support::brute_silhouette(&points, &labels)).abs());
            scored += 1;
        }
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (label, x) in [(0, 0.0), (1, 50.0)] {
        for i in 0..20 {
            points.push(vec![x + f64::from(i % 4) * 0.05, f64::from(i / 4) * 0.05]);
            labels.push(label);
        }
    }
    let blobs = silhouette(&silhouette_support::to_matrix(&points), &labels, Space::Reduced)
        .map_err(|e| e.to_string())?
        .coefficient;
    ensure(
        worst <= 1e-9 && blobs > 0.9 && scored > 300,
        format!("{scored} fixtures, max deviation {worst:.1e}; two blobs {blobs:.4}"),
    )
}

fn sampler_soundness() -> Check {
    let (topics, texts) = sampling_support::corpus(&sampling_support::sizes());
    let own = sampling_support::owner(&topics);
    let cfg = AssignmentSampling::default();
    let n = 10_000;
    let draw = |seed: u64| -> Result<Vec<TaskRecord>, String> {
        let e = |e: comment_topics_core::Error| e.to_string();
        let mut all: Vec<TaskRecord> = Vec::new();
        all.extend(sample_intruder_tasks(&topics, &texts, n, seed).map_err(e)?.tasks.into_iter().map(TaskRecord::Intruder));
        all.extend(
            sample_assignment_tasks(&topics, &texts, n, seed, &cfg)
                .map_err(e)?
                .tasks
                .into_iter()
                .map(TaskRecord::Assignment),
        );
        all.extend(sample_expert_forms(&topics, &texts, n, seed).map_err(e)?.tasks.into_iter().map(TaskRecord::Expert));
        Ok(all)
    };
    let tasks = draw(11)?;
    let result = std::panic::catch_unwind(|| {
        for t in &tasks {
            match t {
                TaskRecord::Intruder(t) => sampling_support::check_intruder(t, &own, &texts),
                TaskRecord::Assignment(t) => sampling_support::check_assignment(t, &own, &cfg),
                TaskRecord::Expert(f) => sampling_support::check_expert(f, &own),
            }
        }
    });
    if result.is_err() {
        return Err("a sampled task broke an invariant".into());
    }
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let write = |name: &str, records: &[TaskRecord]| {
        let p = tmp.path().join(name);
        jsonl::save(&p, records).map_err(|e| e.to_string())?;
        sha256_file(&p).map_err(|e| e.to_string())
    };
    let first = write("a.jsonl", &tasks)?;
    let second = write("b.jsonl", &draw(11)?)?;
    ensure(
        first == second,
        format!("{n} tasks per type sound; seed 11 files {} / {}", &first[..12], &second[..12]),
    )
}

fn pipeline_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = common::write_corpus(tmp.path(), 10, 100);
    let mut digests = Vec::new();
    for root in ["first", "second"] {
        let store = Store::open(tmp.path().join(root)).map_err(|e| e.to_string())?;
        let outcome = common::run(&store, "same", Some(&input), PipelineConfig::default());
        let dir = store.existing_run_dir("same").map_err(|e| e.to_string())?;
        let mut files: Vec<(String, String)> = vec![(
            MANIFEST_FILE.into(),
            sha256_file(&dir.join(MANIFEST_FILE)).map_err(|e| e.to_string())?,
        )];
        for stage in Stage::ALL {
            let rec = outcome.manifest.stage(stage);
            let art = rec.artifact.as_ref().ok_or(format!("{stage} has no artifact"))?;
            for a in std::iter::once(art).chain(&rec.extras) {
                let actual = sha256_file(&dir.join(&a.path)).map_err(|e| e.to_string())?;
                if actual != a.sha256 {
                    return Err(format!("{root}: {} does not match its manifest entry", a.path));
                }
                files.push((a.path.clone(), actual));
            }
        }
        digests.push(files);
    }
    let differing: Vec<&str> = digests[0]
        .iter()
        .zip(&digests[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    ensure(
        differing.is_empty() && digests[0].len() == digests[1].len(),
        if differing.is_empty() {
            format!("manifest and {} artifacts byte-identical across two stores", digests[0].len() - 1)
        } else {
            format!("differing: {differing:?}")
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("choice-task agreement rates", choice_rates),
        ("expert-label agreement", expert_agreement),
        ("stats consistency", stats_consistency),
        ("planted-topic recovery", planted_recovery),
        ("clustering invariants", clustering_invariants),
        ("silhouette oracle", silhouette_oracle),
        ("sampler soundness", sampler_soundness),
        ("pipeline determinism", pipeline_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut out = std::io::stdout();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| *f == n.to_string()) {
            continue;
        }
        let started = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        let _ = writeln!(out, "{tag} criterion {n} {name}: {detail} [{:.2?}]", started.elapsed());
    }
    let _ = out.flush();
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
