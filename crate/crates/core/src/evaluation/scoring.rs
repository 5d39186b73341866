//! Peer agreement scoring.
//!
//! Choice tasks (intruder detection, document-to-topic assignment) are scored
//! per unit against the sampled ground truth. Expert labels are scored per
//! attribute from adjudication verdicts; emotion is compared by exact value.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::tasks::{AssignmentTask, Attribute, ExpertLabelForm, IntruderTask};
use crate::error::{Error, Result};

/// A count out of a total, rendered with round-half-up percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub count: u64,
    pub total: u64,
    pub rate: f64,
}

impl Rate {
    pub fn new(count: u64, total: u64) -> Self {
        Rate {
            count,
            total,
            rate: if total == 0 {
                0.0
            } else {
                count as f64 / total as f64
            },
        }
    }

    /// Percentage with `decimals` places, computed in integers so that
    /// exact halves round up (21 of 2000 is 1.1%, not 1.0%).
    pub fn percent(&self, decimals: u32) -> String {
        if self.total == 0 {
            return "n/a".into();
        }
        let scale = 10u128.pow(decimals);
        let num = self.count as u128 * 100 * scale * 2 + self.total as u128;
        let scaled = num / (2 * self.total as u128);
        if decimals == 0 {
            format!("{scaled}")
        } else {
            let int = scaled / scale;
            let frac = scaled % scale;
            format!("{int}.{frac:0width$}", width = decimals as usize)
        }
    }
}

/// An annotator's response to one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub task_id: String,
    pub annotator_id: String,
    pub payload: AnnotationPayload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnnotationPayload {
    /// Position of the suspected intruder.
    Intruder { choice: usize },
    /// Topic position (0 or 1) chosen for each query, in query order.
    Assignment { choices: Vec<usize> },
    Expert(ExpertAnswers),
}

/// Free-text answers; `None` means the attribute is not part of the topic.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertAnswers {
    #[serde(default)]
    pub trigger: Option<String>,
    #[serde(default)]
    pub entity: Option<String>,
    #[serde(default)]
    pub concern: Option<String>,
    /// 1 (very negative) to 5 (very positive).
    #[serde(default)]
    pub emotion: Option<u8>,
    #[serde(default)]
    pub consequence: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum AnswerValue<'a> {
    Text(&'a str),
    Scale(u8),
}

impl ExpertAnswers {
    fn get(&self, attribute: Attribute) -> Option<AnswerValue<'_>> {
        fn text(o: &Option<String>) -> Option<AnswerValue<'_>> {
            o.as_deref()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(AnswerValue::Text)
        }
        match attribute {
            Attribute::Trigger => text(&self.trigger),
            Attribute::Entity => text(&self.entity),
            Attribute::Concern => text(&self.concern),
            Attribute::Consequence => text(&self.consequence),
            Attribute::Emotion => self.emotion.map(AnswerValue::Scale),
        }
    }

    /// Field-level problems, empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if let Some(e) = self.emotion {
            if !(1..=5).contains(&e) {
                problems.push(format!("emotion: {e} is outside the 1-5 scale"));
            }
        }
        problems
    }
}

impl AnnotationPayload {
    /// Field-level problems for this payload against its task, empty when valid.
    pub fn validate_against(&self, units: Option<usize>) -> Vec<String> {
        match self {
            AnnotationPayload::Intruder { choice } => {
                if *choice >= 3 {
                    vec![format!("choice: {choice} is not one of 0, 1, 2")]
                } else {
                    vec![]
                }
            }
            AnnotationPayload::Assignment { choices } => {
                let mut p = Vec::new();
                if let Some(n) = units {
                    if choices.len() != n {
                        p.push(format!("choices: expected {n} entries, got {}", choices.len()));
                    }
                }
                if let Some(bad) = choices.iter().find(|c| **c > 1) {
                    p.push(format!("choices: {bad} is not a topic position (0 or 1)"));
                }
                p
            }
            AnnotationPayload::Expert(a) => a.validate(),
        }
    }
}

/// Anything with per-unit ground truth that annotators choose between.
pub trait ChoiceTask {
    fn task_id(&self) -> &str;
    fn truths(&self) -> Vec<usize>;
    /// Extracts the per-unit choices from a payload of the right kind.
    fn choices(payload: &AnnotationPayload) -> Option<Vec<usize>>;
}

impl ChoiceTask for IntruderTask {
    fn task_id(&self) -> &str {
        &self.task_id
    }

    fn truths(&self) -> Vec<usize> {
        vec![self.truth_index]
    }

    fn choices(payload: &AnnotationPayload) -> Option<Vec<usize>> {
        match payload {
            AnnotationPayload::Intruder { choice } => Some(vec![*choice]),
            _ => None,
        }
    }
}

impl ChoiceTask for AssignmentTask {
    fn task_id(&self) -> &str {
        &self.task_id
    }

    fn truths(&self) -> Vec<usize> {
        self.truth.clone()
    }

    fn choices(payload: &AnnotationPayload) -> Option<Vec<usize>> {
        match payload {
            AnnotationPayload::Assignment { choices } => Some(choices.clone()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    BothCorrect,
    OneCorrect,
    BothIncorrect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitOutcome {
    pub task_id: String,
    pub unit: usize,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Incomplete {
    pub task_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceReport {
    pub tasks_scored: usize,
    pub units: u64,
    pub both_correct: Rate,
    pub one_correct: Rate,
    pub both_incorrect: Rate,
    pub outcomes: Vec<UnitOutcome>,
    pub incomplete: Vec<Incomplete>,
}

impl ChoiceReport {
    /// Rebuilds counts and rates from the stored unit outcomes.
    pub fn recompute(&self) -> (Rate, Rate, Rate) {
        let total = self.outcomes.len() as u64;
        let count = |o: Outcome| self.outcomes.iter().filter(|u| u.outcome == o).count() as u64;
        (
            Rate::new(count(Outcome::BothCorrect), total),
            Rate::new(count(Outcome::OneCorrect), total),
            Rate::new(count(Outcome::BothIncorrect), total),
        )
    }
}

fn group_by_task(annotations: &[Annotation]) -> HashMap<&str, Vec<&Annotation>> {
    let mut by_task: HashMap<&str, Vec<&Annotation>> = HashMap::new();
    for a in annotations {
        by_task.entry(a.task_id.as_str()).or_default().push(a);
    }
    by_task
}

fn two_annotators<'a>(responses: &[&'a Annotation]) -> std::result::Result<[&'a Annotation; 2], String> {
    let distinct: BTreeSet<&str> = responses.iter().map(|a| a.annotator_id.as_str()).collect();
    if distinct.len() != responses.len() {
        return Err("an annotator answered more than once".into());
    }
    match responses {
        [a, b] => {
            let mut pair = [*a, *b];
            pair.sort_by(|x, y| x.annotator_id.cmp(&y.annotator_id));
            Ok(pair)
        }
        _ => Err(format!(
            "expected 2 annotator responses, found {}",
            responses.len()
        )),
    }
}

/// Classifies every unit as both/one/neither correct. Tasks without exactly
/// two valid responses are reported as incomplete and left out of the rates.
pub fn score_choice_tasks<T: ChoiceTask>(tasks: &[T], annotations: &[Annotation]) -> ChoiceReport {
    let by_task = group_by_task(annotations);
    let mut outcomes = Vec::new();
    let mut incomplete = Vec::new();
    let mut scored = 0;
    for task in tasks {
        let responses = by_task.get(task.task_id()).cloned().unwrap_or_default();
        let pair = match two_annotators(&responses) {
            Ok(p) => p,
            Err(reason) => {
                incomplete.push(Incomplete {
                    task_id: task.task_id().to_string(),
                    reason,
                });
                continue;
            }
        };
        let truths = task.truths();
        let choices: Option<Vec<Vec<usize>>> = pair
            .iter()
            .map(|a| T::choices(&a.payload).filter(|c| c.len() == truths.len()))
            .collect();
        let Some(choices) = choices else {
            incomplete.push(Incomplete {
                task_id: task.task_id().to_string(),
                reason: "response does not match the task shape".into(),
            });
            continue;
        };
        scored += 1;
        for (unit, truth) in truths.iter().enumerate() {
            let correct = choices.iter().filter(|c| c[unit] == *truth).count();
            let outcome = match correct {
                2 => Outcome::BothCorrect,
                1 => Outcome::OneCorrect,
                _ => Outcome::BothIncorrect,
            };
            outcomes.push(UnitOutcome {
                task_id: task.task_id().to_string(),
                unit,
                outcome,
            });
        }
    }
    let mut report = ChoiceReport {
        tasks_scored: scored,
        units: outcomes.len() as u64,
        both_correct: Rate::new(0, 0),
        one_correct: Rate::new(0, 0),
        both_incorrect: Rate::new(0, 0),
        outcomes,
        incomplete,
    };
    let (b, o, n) = report.recompute();
    report.both_correct = b;
    report.one_correct = o;
    report.both_incorrect = n;
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Agree,
    Disagree,
}

/// Why an adjudicator reached a verdict. `R1`..`R4` refer to the rules in
/// `docs/adjudication.md`; `Override` marks an answer one annotator
/// evidently forgot to write down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rationale {
    R1,
    R2,
    R3,
    R4,
    #[serde(rename = "override")]
    Override,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjudication {
    pub task_id: String,
    pub attribute: Attribute,
    pub verdict: Verdict,
    #[serde(default)]
    pub rationale: Vec<Rationale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeAgreement {
    pub attribute: Attribute,
    /// Individual answers, two per scored form.
    pub annotations: u64,
    pub non_null: Rate,
    /// Pairs where at least one annotator answered.
    pub pairs_scored: u64,
    pub agreement: Rate,
    pub overrides: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertReport {
    pub forms_scored: usize,
    pub attributes: Vec<AttributeAgreement>,
    pub total_annotations: u64,
    pub total_non_null: Rate,
    pub overall_agreement: Rate,
    pub incomplete: Vec<Incomplete>,
}

/// Scores expert label forms over `attributes`.
///
/// A pair where both annotators left the attribute empty is excluded. A pair
/// with one empty answer is a disagreement unless adjudicated as an
/// override. Two emotion values agree only when equal; two free-text answers
/// take the adjudicated verdict, and a missing verdict marks the pair
/// incomplete.
pub fn score_expert_labels(
    forms: &[ExpertLabelForm],
    annotations: &[Annotation],
    adjudications: &[Adjudication],
    attributes: &[Attribute],
) -> Result<ExpertReport> {
    let mut verdicts: HashMap<(&str, Attribute), &Adjudication> = HashMap::new();
    for adj in adjudications {
        if verdicts
            .insert((adj.task_id.as_str(), adj.attribute), adj)
            .is_some()
        {
            return Err(Error::Input(format!(
                "duplicate adjudication for {} / {:?}",
                adj.task_id, adj.attribute
            )));
        }
    }
    let by_task = group_by_task(annotations);

    #[derive(Default)]
    struct Tally {
        annotations: u64,
        non_null: u64,
        pairs: u64,
        agree: u64,
        overrides: u64,
    }
    let mut tallies: BTreeMap<Attribute, Tally> =
        attributes.iter().map(|a| (*a, Tally::default())).collect();
    let mut incomplete = Vec::new();
    let mut forms_scored = 0;

    for form in forms {
        let responses = by_task.get(form.task_id.as_str()).cloned().unwrap_or_default();
        let pair = match two_annotators(&responses) {
            Ok(p) => p,
            Err(reason) => {
                incomplete.push(Incomplete {
                    task_id: form.task_id.clone(),
                    reason,
                });
                continue;
            }
        };
        let answers: Vec<&ExpertAnswers> = pair
            .iter()
            .filter_map(|a| match &a.payload {
                AnnotationPayload::Expert(x) => Some(x),
                _ => None,
            })
            .collect();
        if answers.len() != 2 {
            incomplete.push(Incomplete {
                task_id: form.task_id.clone(),
                reason: "response is not an expert label payload".into(),
            });
            continue;
        }
        if let Some(p) = answers.iter().flat_map(|a| a.validate()).next() {
            incomplete.push(Incomplete {
                task_id: form.task_id.clone(),
                reason: p,
            });
            continue;
        }
        forms_scored += 1;
        for attribute in attributes {
            let tally = tallies.get_mut(attribute).expect("initialised");
            tally.annotations += 2;
            let (x, y) = (answers[0].get(*attribute), answers[1].get(*attribute));
            let adj = verdicts.get(&(form.task_id.as_str(), *attribute));
            let agreed = match (&x, &y) {
                (None, None) => continue,
                (Some(_), None) | (None, Some(_)) => {
                    let overridden = adj.is_some_and(|a| {
                        a.verdict == Verdict::Agree && a.rationale.contains(&Rationale::Override)
                    });
                    if overridden {
                        tally.overrides += 1;
                    }
                    overridden
                }
                (Some(AnswerValue::Scale(a)), Some(AnswerValue::Scale(b))) => a == b,
                (Some(_), Some(_)) => match adj {
                    Some(a) => a.verdict == Verdict::Agree,
                    None => {
                        incomplete.push(Incomplete {
                            task_id: form.task_id.clone(),
                            reason: format!("no adjudication for {}", attribute.label()),
                        });
                        tally.annotations -= 2;
                        continue;
                    }
                },
            };
            tally.non_null += [&x, &y].iter().filter(|v| v.is_some()).count() as u64;
            tally.pairs += 1;
            if agreed {
                tally.agree += 1;
            }
        }
    }

    let per: Vec<AttributeAgreement> = attributes
        .iter()
        .map(|a| {
            let t = &tallies[a];
            AttributeAgreement {
                attribute: *a,
                annotations: t.annotations,
                non_null: Rate::new(t.non_null, t.annotations),
                pairs_scored: t.pairs,
                agreement: Rate::new(t.agree, t.pairs),
                overrides: t.overrides,
            }
        })
        .collect();
    let total_annotations = per.iter().map(|p| p.annotations).sum();
    let total_non_null = per.iter().map(|p| p.non_null.count).sum();
    let agree = per.iter().map(|p| p.agreement.count).sum();
    let pairs = per.iter().map(|p| p.pairs_scored).sum();
    Ok(ExpertReport {
        forms_scored,
        attributes: per,
        total_annotations,
        total_non_null: Rate::new(total_non_null, total_annotations),
        overall_agreement: Rate::new(agree, pairs),
        incomplete,
    })
}

/// Attributes reported in the agreement table, in display order.
pub const TABLE_ATTRIBUTES: [Attribute; 4] = [
    Attribute::Trigger,
    Attribute::Concern,
    Attribute::Entity,
    Attribute::Emotion,
];

/// Text table of choice-task results, one column per report.
pub fn render_choice_table(columns: &[(&str, &ChoiceReport)]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<18}", "");
    for (name, _) in columns {
        let _ = write!(out, "{name:<26}");
    }
    out.push('\n');
    let row = |out: &mut String, label: &str, f: &dyn Fn(&ChoiceReport) -> String| {
        let _ = write!(out, "{label:<18}");
        for (_, r) in columns {
            let _ = write!(out, "{:<26}", f(r));
        }
        out.push('\n');
    };
    row(&mut out, "Peer-Coding Tasks", &|r| r.units.to_string());
    row(&mut out, "Both Correct", &|r| {
        counted(&r.both_correct, 1)
    });
    row(&mut out, "One Correct", &|r| {
        counted(&r.one_correct, 1)
    });
    row(&mut out, "Both Incorrect", &|r| {
        counted(&r.both_incorrect, 1)
    });
    out
}

fn cell(rate: &Rate, decimals: u32) -> String {
    match rate.percent(decimals).as_str() {
        "n/a" => "n/a".into(),
        p => format!("{p}%"),
    }
}

fn counted(rate: &Rate, decimals: u32) -> String {
    format!("{} ({})", rate.count, cell(rate, decimals))
}

pub fn render_expert_table(report: &ExpertReport) -> String {
    let mut out = format!(
        "{:<12}{:>12}{:>24}{:>12}\n",
        "Attribute", "Annotations", "Non-Null Annotations", "Agreement"
    );
    for a in &report.attributes {
        let _ = writeln!(
            out,
            "{:<12}{:>12}{:>24}{:>12}",
            a.attribute.label(),
            a.annotations,
            counted(&a.non_null, 0),
            cell(&a.agreement, 0),
        );
    }
    let _ = writeln!(
        out,
        "{:<12}{:>12}{:>24}{:>12}",
        "Total",
        report.total_annotations,
        counted(&report.total_non_null, 0),
        cell(&report.overall_agreement, 0),
    );
    out
}
