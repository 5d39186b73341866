//! Human evaluation: sampling annotation tasks and scoring the responses.

pub mod scoring;
pub mod tasks;

pub use scoring::{
    render_choice_table, render_expert_table, score_choice_tasks, score_expert_labels,
    Adjudication, Annotation, AnnotationPayload, AttributeAgreement, ChoiceReport, ChoiceTask,
    ExpertAnswers, ExpertReport, Incomplete, Outcome, Rate, Rationale, UnitOutcome, Verdict,
    TABLE_ATTRIBUTES,
};
pub use tasks::{
    sample_assignment_tasks, sample_expert_forms, sample_intruder_tasks, AssignmentSampling,
    AssignmentTask, Attribute, ExpertLabelForm, IntruderTask, Question, Sampled, TaskItem,
    TaskKind, TaskRecord, TaskView, Texts, EXPERT_SAMPLE_SIZE,
};

/// Splits a mixed task list by kind.
pub fn partition_tasks(
    records: &[TaskRecord],
) -> (Vec<IntruderTask>, Vec<AssignmentTask>, Vec<ExpertLabelForm>) {
    let mut intruder = Vec::new();
    let mut assignment = Vec::new();
    let mut expert = Vec::new();
    for r in records {
        match r {
            TaskRecord::Intruder(t) => intruder.push(t.clone()),
            TaskRecord::Assignment(t) => assignment.push(t.clone()),
            TaskRecord::Expert(t) => expert.push(t.clone()),
        }
    }
    (intruder, assignment, expert)
}
