//! Agreement reports derived from a run's tasks and journal.

use comment_topics_core::evaluation::{
    partition_tasks, render_choice_table, render_expert_table, score_choice_tasks, score_expert_labels,
    Adjudication, Annotation, ChoiceReport, ExpertReport, TaskRecord, TABLE_ATTRIBUTES,
};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reports {
    pub intruder: ChoiceReport,
    pub assignment: ChoiceReport,
    pub expert: ExpertReport,
    /// Plain-text renderings of the choice and expert tables.
    pub choice_table: String,
    pub expert_table: String,
}

pub fn build_reports(
    tasks: &[TaskRecord],
    annotations: &[Annotation],
    adjudications: &[Adjudication],
) -> Result<Reports> {
    let (intruder, assignment, expert) = partition_tasks(tasks);
    let intruder = score_choice_tasks(&intruder, annotations);
    let assignment = score_choice_tasks(&assignment, annotations);
    let expert = score_expert_labels(&expert, annotations, adjudications, &TABLE_ATTRIBUTES)?;
    let choice_table = render_choice_table(&[
        ("Intruder Detection", &intruder),
        ("Document to Topic Assignment", &assignment),
    ]);
    let expert_table = render_expert_table(&expert);
    Ok(Reports {
        intruder,
        assignment,
        expert,
        choice_table,
        expert_table,
    })
}
