use std::collections::HashMap;

use chrono::{TimeZone, Utc};
use comment_topics_core::evaluation::{
    Adjudication, Annotation, AnnotationPayload, Attribute, ExpertLabelForm, IntruderTask, TaskItem, TaskRecord,
    Verdict,
};
use comment_topics_core::topics::{Direction, Topic, TrendBucket, TrendSeries};
use comment_topics_service::api::partition_trends;
use comment_topics_service::journal::{apply_mutations, Journal, Mutation, TopicField};
use comment_topics_service::ServiceError;
use proptest::prelude::*;

fn tasks(n: usize) -> Vec<TaskRecord> {
    let item = |d: String| TaskItem { doc_id: d, text: "text".into() };
    let mut out: Vec<TaskRecord> = (0..n)
        .map(|i| {
            TaskRecord::Intruder(IntruderTask {
                task_id: format!("intruder-{i:05}"),
                items: (0..3).map(|k| item(format!("d{i}-{k}"))).collect(),
                truth_index: i % 3,
                base_topic: 0,
                intruder_topic: 1,
            })
        })
        .collect();
    out.push(TaskRecord::Expert(ExpertLabelForm {
        task_id: "expert-00000".into(),
        topic_id: 0,
        sample: (0..10).map(|k| item(format!("e{k}"))).collect(),
    }));
    out
}

fn answer(task: &str, who: &str) -> Annotation {
    Annotation {
        task_id: task.into(),
        annotator_id: who.into(),
        payload: AnnotationPayload::Intruder { choice: 1 },
    }
}

#[test]
fn a_task_takes_two_annotators_once_each() {
    let dir = tempfile::tempdir().unwrap();
    let j = Journal::new(dir.path());
    let t = tasks(3);
    assert_eq!(j.submit(&t, answer("intruder-00000", "a")).unwrap().seq, 0);
    assert!(matches!(j.submit(&t, answer("intruder-00000", "a")), Err(ServiceError::Conflict(_))));
    assert_eq!(j.submit(&t, answer("intruder-00000", "b")).unwrap().seq, 1);
    assert!(matches!(j.submit(&t, answer("intruder-00000", "c")), Err(ServiceError::Conflict(_))));
    assert!(matches!(j.submit(&t, answer("intruder-09999", "a")), Err(ServiceError::NotFound(_))));
    assert!(matches!(j.submit(&t, answer("intruder-00001", " ")), Err(ServiceError::Invalid(_))));
    assert_eq!(j.annotations().unwrap().len(), 2);

    // The full task drops out of a third annotator's queue.
    let next = j.next_task(&t, "c", 1).unwrap();
    assert_eq!(next.progress.total, 3);
}

#[test]
fn task_orders_are_recorded_and_differ_between_annotators() {
    let dir = tempfile::tempdir().unwrap();
    let j = Journal::new(dir.path());
    let t = tasks(40);
    let a = j.task_order(&t, "a", 9).unwrap();
    assert_eq!(j.task_order(&t, "a", 9).unwrap(), a);
    assert_eq!(Journal::new(dir.path()).task_order(&t, "a", 9).unwrap(), a);
    assert_ne!(j.task_order(&t, "b", 9).unwrap(), a);
    let mut sorted = a.clone();
    sorted.sort();
    let mut ids: Vec<String> = t.iter().map(|r| r.task_id().to_string()).collect();
    ids.sort();
    assert_eq!(sorted, ids);
}

#[test]
fn adjudications_apply_to_expert_forms_once() {
    let dir = tempfile::tempdir().unwrap();
    let j = Journal::new(dir.path());
    let t = tasks(1);
    let adj = |task: &str| Adjudication {
        task_id: task.into(),
        attribute: Attribute::Entity,
        verdict: Verdict::Disagree,
        rationale: vec![],
        note: None,
    };
    j.adjudicate(&t, adj("expert-00000")).unwrap();
    assert!(matches!(j.adjudicate(&t, adj("expert-00000")), Err(ServiceError::Conflict(_))));
    assert!(matches!(j.adjudicate(&t, adj("intruder-00000")), Err(ServiceError::Invalid(_))));
    assert!(matches!(j.adjudicate(&t, adj("nope")), Err(ServiceError::NotFound(_))));
}

fn topic(id: i64) -> Topic {
    Topic {
        topic_id: id,
        member_ids: vec![format!("d{id}")],
        size: 1,
        representative_id: format!("d{id}"),
        name: None,
        theme: None,
    }
}

fn series(id: i64, slope: f64) -> TrendSeries {
    TrendSeries {
        topic_id: id,
        buckets: vec![TrendBucket {
            window_start: Utc.timestamp_opt(0, 0).unwrap(),
            count: 0,
        }],
        slope,
        direction: comment_topics_core::topics::classify(slope, 0.5),
    }
}

proptest! {
    #[test]
    fn last_edit_wins(edits in prop::collection::vec((0i64..5, any::<bool>(), prop::option::of("[a-z]{1,6}")), 0..40)) {
        let mut topics: Vec<Topic> = (0..4).map(topic).collect();
        let mutations: Vec<Mutation> = edits
            .iter()
            .enumerate()
            .map(|(i, (t, is_name, v))| Mutation {
                seq: i as u64,
                at: Utc.timestamp_opt(i as i64, 0).unwrap(),
                topic_id: *t,
                field: if *is_name { TopicField::Name } else { TopicField::Theme },
                value: v.clone(),
                editor: None,
            })
            .collect();
        apply_mutations(&mut topics, &mutations);
        let mut expect: HashMap<(i64, bool), Option<String>> = HashMap::new();
        for (t, is_name, v) in &edits {
            expect.insert((*t, *is_name), v.clone());
        }
        for t in &topics {
            prop_assert_eq!(&t.name, expect.get(&(t.topic_id, true)).unwrap_or(&None));
            prop_assert_eq!(&t.theme, expect.get(&(t.topic_id, false)).unwrap_or(&None));
        }
    }

    #[test]
    fn trend_panels_partition_topics(slopes in prop::collection::vec(-5.0f64..5.0, 0..30)) {
        let all: Vec<TrendSeries> = slopes.iter().enumerate().map(|(i, s)| series(i as i64, *s)).collect();
        let p = partition_trends(&all);
        prop_assert_eq!(p.rising.len() + p.falling.len() + p.flat.len(), all.len());
        prop_assert!(p.rising.iter().all(|s| s.direction == Direction::Rising && s.slope > 0.5));
        prop_assert!(p.falling.iter().all(|s| s.direction == Direction::Falling && s.slope < -0.5));
        prop_assert!(p.flat.iter().all(|s| s.slope.abs() <= 0.5));
        prop_assert!(p.rising.windows(2).all(|w| w[0].slope >= w[1].slope));
        prop_assert!(p.falling.windows(2).all(|w| w[0].slope <= w[1].slope));
    }
}
