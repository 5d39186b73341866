//! Synthetic annotation fixtures with known outcome counts.
//!
//! Shared by the evaluation tests and the acceptance suite.

#![allow(dead_code)]

use comment_topics_core::evaluation::{
    Adjudication, Annotation, AnnotationPayload, AssignmentTask, Attribute, ExpertAnswers, ExpertLabelForm,
    IntruderTask, Rationale, TaskItem, Verdict,
};

fn items(prefix: &str, n: usize) -> Vec<TaskItem> {
    (0..n)
        .map(|i| TaskItem {
            doc_id: format!("{prefix}-{i}"),
            text: format!("comment {i}"),
        })
        .collect()
}

fn annotation(task_id: &str, annotator: &str, payload: AnnotationPayload) -> Annotation {
    Annotation {
        task_id: task_id.into(),
        annotator_id: annotator.into(),
        payload,
    }
}

/// Intruder tasks answered so that exactly `both`, `one` and `neither`
/// tasks end with two, one and zero correct annotators.
pub fn intruder_fixture(both: usize, one: usize, neither: usize) -> (Vec<IntruderTask>, Vec<Annotation>) {
    let mut tasks = Vec::new();
    let mut annotations = Vec::new();
    for i in 0..both + one + neither {
        let id = format!("intruder-{i:05}");
        let truth = i % 3;
        let wrong = (truth + 1) % 3;
        let (a, b) = if i < both {
            (truth, truth)
        } else if i < both + one {
            if i % 2 == 0 { (truth, wrong) } else { (wrong, truth) }
        } else {
            (wrong, (truth + 2) % 3)
        };
        annotations.push(annotation(&id, "ann-a", AnnotationPayload::Intruder { choice: a }));
        annotations.push(annotation(&id, "ann-b", AnnotationPayload::Intruder { choice: b }));
        tasks.push(IntruderTask {
            task_id: id.clone(),
            items: items(&id, 3),
            truth_index: truth,
            base_topic: 0,
            intruder_topic: 1,
        });
    }
    (tasks, annotations)
}

/// Assignment tasks of ten queries each; outcome counts are per query unit
/// and must sum to a multiple of ten.
pub fn assignment_fixture(both: usize, one: usize, neither: usize) -> (Vec<AssignmentTask>, Vec<Annotation>) {
    const QUERIES: usize = 10;
    let units = both + one + neither;
    assert_eq!(units % QUERIES, 0);
    let mut tasks = Vec::new();
    let mut annotations = Vec::new();
    for t in 0..units / QUERIES {
        let id = format!("assignment-{t:05}");
        let truth: Vec<usize> = (0..QUERIES).map(|q| usize::from((q + t) % 3 == 0)).collect();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (q, &y) in truth.iter().enumerate() {
            let u = t * QUERIES + q;
            let (ca, cb) = if u < both {
                (true, true)
            } else if u < both + one {
                (u % 2 == 0, u % 2 == 1)
            } else {
                (false, false)
            };
            a.push(if ca { y } else { 1 - y });
            b.push(if cb { y } else { 1 - y });
        }
        let split = [truth.iter().filter(|x| **x == 0).count(), truth.iter().filter(|x| **x == 1).count()];
        annotations.push(annotation(&id, "ann-a", AnnotationPayload::Assignment { choices: a }));
        annotations.push(annotation(&id, "ann-b", AnnotationPayload::Assignment { choices: b }));
        tasks.push(AssignmentTask {
            task_id: id.clone(),
            topics: [0, 1],
            exemplars: [items(&format!("{id}-x0"), 10), items(&format!("{id}-x1"), 10)],
            queries: items(&id, QUERIES),
            truth,
            split,
        });
    }
    (tasks, annotations)
}

/// Per-attribute pair counts for an expert-label fixture.
#[derive(Debug, Clone, Copy)]
pub struct AttributePlan {
    /// Pairs where exactly one annotator answered.
    pub one_null: usize,
    /// Pairs where both answered.
    pub both: usize,
    /// Both-answered pairs that agree.
    pub both_agree: usize,
    /// One-null pairs adjudicated as agreeing.
    pub overrides: usize,
}

fn slot(x: &mut ExpertAnswers, attribute: Attribute) -> &mut Option<String> {
    match attribute {
        Attribute::Trigger => &mut x.trigger,
        Attribute::Entity => &mut x.entity,
        Attribute::Concern => &mut x.concern,
        _ => &mut x.consequence,
    }
}

pub const TABLE_FORMS: usize = 100;

pub fn table_plan() -> [(Attribute, AttributePlan); 4] {
    let plan = |one_null, both, both_agree, overrides| AttributePlan {
        one_null,
        both,
        both_agree,
        overrides,
    };
    [
        (Attribute::Trigger, plan(7, 85, 85, 4)),
        (Attribute::Concern, plan(11, 67, 66, 2)),
        (Attribute::Entity, plan(8, 57, 57, 6)),
        (Attribute::Emotion, plan(5, 95, 84, 0)),
    ]
}

/// Two annotators fill `forms` label forms following `plan`. Free-text
/// pairs that both answered get a verdict matching the plan.
pub fn expert_fixture(
    forms: usize,
    plan: &[(Attribute, AttributePlan)],
) -> (Vec<ExpertLabelForm>, Vec<Annotation>, Vec<Adjudication>) {
    let mut tasks = Vec::new();
    let mut answers = vec![(ExpertAnswers::default(), ExpertAnswers::default()); forms];
    let mut adjudications = Vec::new();
    for f in 0..forms {
        tasks.push(ExpertLabelForm {
            task_id: format!("expert-{f:05}"),
            topic_id: f as i64,
            sample: items(&format!("expert-{f:05}"), 10),
        });
    }
    for (attribute, p) in plan {
        assert!(p.both + p.one_null <= forms);
        for f in 0..p.both + p.one_null {
            let (a, b) = &mut answers[f];
            let task_id = &tasks[f].task_id;
            let agree = f < p.both_agree;
            let second = f < p.both;
            match attribute {
                Attribute::Emotion => {
                    a.emotion = Some(3);
                    b.emotion = second.then_some(if agree { 3 } else { 4 });
                }
                other => {
                    *slot(a, *other) = Some(format!("{} answer A", other.label()));
                    if second {
                        *slot(b, *other) = Some(format!("{} answer B", other.label()));
                        adjudications.push(Adjudication {
                            task_id: task_id.clone(),
                            attribute: *attribute,
                            verdict: if agree { Verdict::Agree } else { Verdict::Disagree },
                            rationale: if agree { vec![Rationale::R1] } else { vec![Rationale::R3] },
                            note: None,
                        });
                    }
                }
            }
            if !second && f < p.both + p.overrides {
                adjudications.push(Adjudication {
                    task_id: task_id.clone(),
                    attribute: *attribute,
                    verdict: Verdict::Agree,
                    rationale: vec![Rationale::Override],
                    note: Some("the empty answer is implied by the sample".into()),
                });
            }
        }
    }
    let mut annotations = Vec::new();
    for (form, (a, b)) in tasks.iter().zip(answers) {
        annotations.push(annotation(&form.task_id, "ann-a", AnnotationPayload::Expert(a)));
        annotations.push(annotation(&form.task_id, "ann-b", AnnotationPayload::Expert(b)));
    }
    (tasks, annotations, adjudications)
}
