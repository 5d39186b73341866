//! Annotation task types and their samplers.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topics::Topic;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskItem {
    pub doc_id: String,
    pub text: String,
}

/// Three comments, two from `base_topic` and one from `intruder_topic`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntruderTask {
    pub task_id: String,
    pub items: Vec<TaskItem>,
    pub truth_index: usize,
    pub base_topic: i64,
    pub intruder_topic: i64,
}

/// Two topics shown through exemplars, plus queries to sort between them.
/// `truth[q]` is 0 when query `q` came from `topics[0]`, 1 otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentTask {
    pub task_id: String,
    pub topics: [i64; 2],
    pub exemplars: [Vec<TaskItem>; 2],
    pub queries: Vec<TaskItem>,
    pub truth: Vec<usize>,
    /// Queries drawn from each topic.
    pub split: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertLabelForm {
    pub task_id: String,
    pub topic_id: i64,
    pub sample: Vec<TaskItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Trigger,
    Entity,
    Concern,
    Emotion,
    Consequence,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::Trigger,
        Attribute::Entity,
        Attribute::Concern,
        Attribute::Emotion,
        Attribute::Consequence,
    ];

    pub fn question(self) -> &'static str {
        match self {
            Attribute::Trigger => "What event do you think triggered these comments (e.g. a network outage)?",
            Attribute::Entity => "Which entities do the comments address (e.g. specific teams or companies)?",
            Attribute::Concern => "What is the concern of the comments (e.g. a complaint)?",
            Attribute::Emotion => "How do you judge the emotion of the comments, from 1 (very negative) to 5 (very positive)?",
            Attribute::Consequence => "Do the users state consequences (e.g. threatening to cancel the contract)?",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Attribute::Trigger => "Trigger",
            Attribute::Entity => "Entity",
            Attribute::Concern => "Concern",
            Attribute::Emotion => "Emotion",
            Attribute::Consequence => "Consequence",
        }
    }
}

impl std::str::FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Input(format!("unknown attribute {s:?}")))
    }
}

/// A task file line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskRecord {
    Intruder(IntruderTask),
    Assignment(AssignmentTask),
    Expert(ExpertLabelForm),
}

impl TaskRecord {
    pub fn task_id(&self) -> &str {
        match self {
            TaskRecord::Intruder(t) => &t.task_id,
            TaskRecord::Assignment(t) => &t.task_id,
            TaskRecord::Expert(t) => &t.task_id,
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            TaskRecord::Intruder(_) => TaskKind::Intruder,
            TaskRecord::Assignment(_) => TaskKind::Assignment,
            TaskRecord::Expert(_) => TaskKind::Expert,
        }
    }

    /// The annotator-facing projection, free of ground truth.
    pub fn view(&self) -> TaskView {
        match self {
            TaskRecord::Intruder(t) => TaskView::Intruder {
                task_id: t.task_id.clone(),
                items: t.items.clone(),
            },
            TaskRecord::Assignment(t) => TaskView::Assignment {
                task_id: t.task_id.clone(),
                exemplars: t.exemplars.clone(),
                queries: t.queries.clone(),
            },
            TaskRecord::Expert(t) => TaskView::Expert {
                task_id: t.task_id.clone(),
                sample: t.sample.clone(),
                questions: Attribute::ALL
                    .iter()
                    .map(|a| Question {
                        attribute: *a,
                        text: a.question().to_string(),
                    })
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Intruder,
    Assignment,
    Expert,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Intruder => "intruder",
            TaskKind::Assignment => "assignment",
            TaskKind::Expert => "expert",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intruder" => Ok(TaskKind::Intruder),
            "assignment" | "assign" => Ok(TaskKind::Assignment),
            "expert" => Ok(TaskKind::Expert),
            other => Err(Error::Input(format!("unknown task kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub attribute: Attribute,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskView {
    Intruder {
        task_id: String,
        items: Vec<TaskItem>,
    },
    /// Topics are presented only as positions 0 and 1.
    Assignment {
        task_id: String,
        exemplars: [Vec<TaskItem>; 2],
        queries: Vec<TaskItem>,
    },
    Expert {
        task_id: String,
        sample: Vec<TaskItem>,
        questions: Vec<Question>,
    },
}

/// Tasks plus the topics left out of the sampling pool for being too small.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampled<T> {
    pub tasks: Vec<T>,
    pub excluded_topics: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentSampling {
    pub exemplars_per_topic: usize,
    pub queries: usize,
    /// Inclusive range for the number of queries drawn from the first topic.
    pub split_min: usize,
    pub split_max: usize,
}

impl Default for AssignmentSampling {
    fn default() -> Self {
        AssignmentSampling {
            exemplars_per_topic: 10,
            queries: 10,
            split_min: 1,
            split_max: 9,
        }
    }
}

pub const EXPERT_SAMPLE_SIZE: usize = 10;

/// Lookup from doc id to comment text.
pub type Texts = HashMap<String, String>;

fn item(texts: &Texts, doc_id: &str) -> Result<TaskItem> {
    let text = texts
        .get(doc_id)
        .ok_or_else(|| Error::Input(format!("no text for document {doc_id}")))?;
    Ok(TaskItem {
        doc_id: doc_id.to_string(),
        text: text.clone(),
    })
}

fn draw<'a>(rng: &mut ChaCha8Rng, members: &'a [String], k: usize) -> Vec<&'a String> {
    rand::seq::index::sample(rng, members.len(), k)
        .into_iter()
        .map(|i| &members[i])
        .collect()
}

fn partition_pool(topics: &[Topic], min_size: usize) -> (Vec<&Topic>, Vec<i64>) {
    let (pool, small): (Vec<&Topic>, Vec<&Topic>) =
        topics.iter().partition(|t| t.member_ids.len() >= min_size);
    let excluded: Vec<i64> = small.iter().map(|t| t.topic_id).collect();
    if !excluded.is_empty() {
        log::info!(
            "{} topic(s) below {min_size} members excluded from sampling",
            excluded.len()
        );
    }
    (pool, excluded)
}

/// Base topic uniform over topics with at least two members; intruder topic
/// uniform over all other topics.
pub fn sample_intruder_tasks(
    topics: &[Topic],
    texts: &Texts,
    n_tasks: usize,
    seed: u64,
) -> Result<Sampled<IntruderTask>> {
    if topics.len() < 2 {
        return Err(Error::Sampling(format!(
            "intruder tasks need at least 2 topics, got {}",
            topics.len()
        )));
    }
    let non_empty: Vec<&Topic> = topics.iter().filter(|t| !t.member_ids.is_empty()).collect();
    let (bases, excluded) = partition_pool(topics, 2);
    if bases.is_empty() {
        return Err(Error::Sampling(
            "intruder tasks need a base topic with at least 2 members".into(),
        ));
    }
    if non_empty.len() < 2 {
        return Err(Error::Sampling(
            "intruder tasks need a second non-empty topic".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::with_capacity(n_tasks);
    for i in 0..n_tasks {
        let base = bases[rng.random_range(0..bases.len())];
        let others: Vec<&&Topic> = non_empty
            .iter()
            .filter(|t| t.topic_id != base.topic_id)
            .collect();
        let intruder = others[rng.random_range(0..others.len())];
        let mut items: Vec<(TaskItem, bool)> = draw(&mut rng, &base.member_ids, 2)
            .into_iter()
            .map(|d| item(texts, d).map(|it| (it, false)))
            .collect::<Result<_>>()?;
        let odd = &intruder.member_ids[rng.random_range(0..intruder.member_ids.len())];
        items.push((item(texts, odd)?, true));
        items.shuffle(&mut rng);
        let truth_index = items.iter().position(|(_, t)| *t).expect("intruder present");
        tasks.push(IntruderTask {
            task_id: format!("intruder-{i:05}"),
            items: items.into_iter().map(|(it, _)| it).collect(),
            truth_index,
            base_topic: base.topic_id,
            intruder_topic: intruder.topic_id,
        });
    }
    Ok(Sampled {
        tasks,
        excluded_topics: excluded,
    })
}

/// Ordered topic pairs drawn uniformly from topics large enough for any
/// split; the split is uniform over `split_min..=split_max`.
pub fn sample_assignment_tasks(
    topics: &[Topic],
    texts: &Texts,
    n_tasks: usize,
    seed: u64,
    config: &AssignmentSampling,
) -> Result<Sampled<AssignmentTask>> {
    if config.split_min > config.split_max || config.split_max > config.queries {
        return Err(Error::Config(format!(
            "split range {}..={} must lie within 0..={}",
            config.split_min, config.split_max, config.queries
        )));
    }
    let widest = config.split_max.max(config.queries - config.split_min);
    let needed = config.exemplars_per_topic + widest;
    let (pool, excluded) = partition_pool(topics, needed);
    if pool.len() < 2 {
        return Err(Error::Sampling(format!(
            "assignment tasks need 2 topics with at least {needed} members, found {}",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::with_capacity(n_tasks);
    for i in 0..n_tasks {
        let first = rng.random_range(0..pool.len());
        let mut second = rng.random_range(0..pool.len() - 1);
        if second >= first {
            second += 1;
        }
        let k = rng.random_range(config.split_min..=config.split_max);
        let split = [k, config.queries - k];
        let mut exemplars: [Vec<TaskItem>; 2] = [Vec::new(), Vec::new()];
        let mut queries: Vec<(TaskItem, usize)> = Vec::with_capacity(config.queries);
        for (side, &t) in [first, second].iter().enumerate() {
            let picked = draw(
                &mut rng,
                &pool[t].member_ids,
                config.exemplars_per_topic + split[side],
            );
            let (ex, qs) = picked.split_at(config.exemplars_per_topic);
            exemplars[side] = ex.iter().map(|d| item(texts, d)).collect::<Result<_>>()?;
            for d in qs {
                queries.push((item(texts, d)?, side));
            }
        }
        queries.shuffle(&mut rng);
        tasks.push(AssignmentTask {
            task_id: format!("assignment-{i:05}"),
            topics: [pool[first].topic_id, pool[second].topic_id],
            exemplars,
            truth: queries.iter().map(|(_, s)| *s).collect(),
            queries: queries.into_iter().map(|(q, _)| q).collect(),
            split,
        });
    }
    Ok(Sampled {
        tasks,
        excluded_topics: excluded,
    })
}

/// Topics are drawn without replacement; when more forms than eligible
/// topics are requested the pool is reshuffled and drawn again.
pub fn sample_expert_forms(
    topics: &[Topic],
    texts: &Texts,
    n_forms: usize,
    seed: u64,
) -> Result<Sampled<ExpertLabelForm>> {
    let (pool, excluded) = partition_pool(topics, EXPERT_SAMPLE_SIZE);
    if pool.is_empty() && n_forms > 0 {
        return Err(Error::Sampling(format!(
            "expert forms need a topic with at least {EXPERT_SAMPLE_SIZE} members"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = Vec::new();
    let mut forms = Vec::with_capacity(n_forms);
    for i in 0..n_forms {
        if order.is_empty() {
            order = (0..pool.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let topic = pool[order.pop().expect("refilled")];
        let sample = draw(&mut rng, &topic.member_ids, EXPERT_SAMPLE_SIZE)
            .into_iter()
            .map(|d| item(texts, d))
            .collect::<Result<_>>()?;
        forms.push(ExpertLabelForm {
            task_id: format!("expert-{i:05}"),
            topic_id: topic.topic_id,
            sample,
        });
    }
    Ok(Sampled {
        tasks: forms,
        excluded_topics: excluded,
    })
}
