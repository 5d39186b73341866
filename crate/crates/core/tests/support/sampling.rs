//! Task invariants checked against the topics the tasks were drawn from.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use comment_topics_core::evaluation::{AssignmentSampling, AssignmentTask, ExpertLabelForm, IntruderTask, Texts, EXPERT_SAMPLE_SIZE};
use comment_topics_core::topics::Topic;

pub fn corpus(sizes: &[usize]) -> (Vec<Topic>, Texts) {
    let mut texts = Texts::new();
    let topics = sizes
        .iter()
        .enumerate()
        .map(|(t, &n)| {
            let members: Vec<String> = (0..n).map(|i| format!("t{t:02}-d{i:03}")).collect();
            for m in &members {
                texts.insert(m.clone(), format!("comment body {m}"));
            }
            Topic {
                topic_id: t as i64,
                representative_id: members.first().cloned().unwrap_or_default(),
                size: n,
                member_ids: members,
                name: None,
                theme: None,
            }
        })
        .collect();
    (topics, texts)
}

pub fn owner(topics: &[Topic]) -> HashMap<&str, i64> {
    topics
        .iter()
        .flat_map(|t| t.member_ids.iter().map(move |m| (m.as_str(), t.topic_id)))
        .collect()
}

pub fn check_intruder(t: &IntruderTask, own: &HashMap<&str, i64>, texts: &Texts) {
    assert_eq!(t.items.len(), 3);
    assert!(t.truth_index < 3);
    assert_ne!(t.base_topic, t.intruder_topic);
    let ids: HashSet<&str> = t.items.iter().map(|i| i.doc_id.as_str()).collect();
    assert_eq!(ids.len(), 3, "{}: repeated item", t.task_id);
    for (k, it) in t.items.iter().enumerate() {
        let want = if k == t.truth_index { t.intruder_topic } else { t.base_topic };
        assert_eq!(own[it.doc_id.as_str()], want, "{}", t.task_id);
        assert_eq!(texts[&it.doc_id], it.text);
    }
}

pub fn check_assignment(t: &AssignmentTask, own: &HashMap<&str, i64>, cfg: &AssignmentSampling) {
    assert_ne!(t.topics[0], t.topics[1]);
    assert_eq!(t.queries.len(), cfg.queries);
    assert_eq!(t.truth.len(), cfg.queries);
    assert!((cfg.split_min..=cfg.split_max).contains(&t.split[0]));
    assert_eq!(t.split[0] + t.split[1], cfg.queries);
    assert_eq!(t.truth.iter().filter(|x| **x == 0).count(), t.split[0]);
    let mut seen = HashSet::new();
    for side in 0..2 {
        assert_eq!(t.exemplars[side].len(), cfg.exemplars_per_topic);
        for e in &t.exemplars[side] {
            assert_eq!(own[e.doc_id.as_str()], t.topics[side]);
            assert!(seen.insert(e.doc_id.clone()));
        }
    }
    for (q, y) in t.queries.iter().zip(&t.truth) {
        assert_eq!(own[q.doc_id.as_str()], t.topics[*y]);
        assert!(seen.insert(q.doc_id.clone()), "{}: query repeats a shown comment", t.task_id);
    }
}

pub fn check_expert(f: &ExpertLabelForm, own: &HashMap<&str, i64>) {
    assert_eq!(f.sample.len(), EXPERT_SAMPLE_SIZE);
    let ids: HashSet<&str> = f.sample.iter().map(|i| i.doc_id.as_str()).collect();
    assert_eq!(ids.len(), EXPERT_SAMPLE_SIZE);
    assert!(f.sample.iter().all(|i| own[i.doc_id.as_str()] == f.topic_id));
}

pub fn sizes() -> Vec<usize> {
    // Mixed sizes, including topics too small for some task types.
    (0..30).map(|t| [1, 3, 12, 25, 60, 150][t % 6]).collect()
}
