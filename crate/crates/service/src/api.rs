//! HTTP/JSON API over a run store. The schema is documented in `docs/api.md`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use comment_topics_core::evaluation::{Adjudication, Annotation, TaskRecord};
use comment_topics_core::topics::{Direction, Topic, TrendSeries};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::assign::{assign_text, DEFAULT_NEIGHBOURS};
use crate::config::RemoteConfig;
use crate::error::ServiceError;
use crate::files::sha256_file;
use crate::journal::{apply_mutations, Journal, TopicField};
use crate::manifest::MANIFEST_FILE;
use crate::reports::build_reports;
use crate::store::{RunData, Store};

/// Controlled theme vocabulary offered to the explorer.
pub const THEME_VOCABULARY: &str = include_str!("../../../docs/themes.txt");

const DEFAULT_SAMPLES: usize = 5;
const MAX_SAMPLES: usize = 100;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    store: Store,
    remote: Option<RemoteConfig>,
    /// Loaded runs keyed by id, tagged with the manifest hash they came from.
    cache: Mutex<HashMap<String, (String, Arc<RunData>)>>,
    /// Serialises journal appends.
    writes: tokio::sync::Mutex<()>,
}

impl AppState {
    pub fn new(store: Store, remote: Option<RemoteConfig>) -> Self {
        AppState {
            inner: Arc::new(Inner {
                store,
                remote,
                cache: Mutex::new(HashMap::new()),
                writes: tokio::sync::Mutex::new(()),
            }),
        }
    }

    fn store(&self) -> &Store {
        &self.inner.store
    }

    async fn run(&self, run_id: &str) -> Result<Arc<RunData>, ApiError> {
        let state = self.clone();
        let run_id = run_id.to_string();
        blocking(move || {
            let dir = state.store().existing_run_dir(&run_id)?;
            let tag = sha256_file(&dir.join(MANIFEST_FILE))?;
            if let Some((t, data)) = state.inner.cache.lock().expect("cache lock").get(&run_id) {
                if *t == tag {
                    return Ok(data.clone());
                }
            }
            let data = Arc::new(state.store().load_run(&run_id)?);
            state
                .inner
                .cache
                .lock()
                .expect("cache lock")
                .insert(run_id, (tag, data.clone()));
            Ok(data)
        })
        .await
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(ServiceError::NotReady(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, fields) = match &self.0 {
            ServiceError::RunNotFound(_) | ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, None),
            ServiceError::Invalid(f) => (StatusCode::UNPROCESSABLE_ENTITY, Some(f.clone())),
            ServiceError::Usage(_) => (StatusCode::BAD_REQUEST, None),
            ServiceError::Conflict(_) | ServiceError::NotReady(_) => (StatusCode::CONFLICT, None),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, None),
        };
        let mut body = json!({ "error": self.0.to_string() });
        if let Some(f) = fields {
            body["fields"] = json!(f);
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse_body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError(ServiceError::Invalid(vec![format!("body: {e}")])))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/runs", get(list_runs))
        .route("/api/themes", get(themes))
        .route("/api/runs/{run}/manifest", get(manifest))
        .route("/api/runs/{run}/topics", get(topics))
        .route("/api/runs/{run}/topics/{topic}", get(topic))
        .route("/api/runs/{run}/topics/{topic}/name", put(set_name))
        .route("/api/runs/{run}/topics/{topic}/theme", put(set_theme))
        .route("/api/runs/{run}/projection", get(projection))
        .route("/api/runs/{run}/trends", get(trends))
        .route("/api/runs/{run}/stats", get(stats))
        .route("/api/runs/{run}/silhouette", get(silhouette))
        .route("/api/runs/{run}/tasks/next", get(next_task))
        .route("/api/runs/{run}/tasks/{task}/responses", get(responses))
        .route("/api/runs/{run}/annotations", post(submit_annotation))
        .route("/api/runs/{run}/adjudications", post(submit_adjudication))
        .route("/api/runs/{run}/reports", get(reports))
        .route("/api/runs/{run}/assign", post(assign))
        .with_state(state)
}

/// Serves until interrupted.
pub async fn serve(state: AppState, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn list_runs(State(state): State<AppState>) -> ApiResult<Value> {
    let store = state.store().clone();
    let runs = blocking(move || store.list_runs()).await?;
    Ok(Json(json!({ "runs": runs })))
}

async fn themes() -> Json<Value> {
    let themes: Vec<&str> = THEME_VOCABULARY
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    Json(json!({ "themes": themes }))
}

async fn manifest(State(state): State<AppState>, Path(run): Path<String>) -> ApiResult<Value> {
    let store = state.store().clone();
    let m = blocking(move || store.load_manifest(&run)).await?;
    Ok(Json(serde_json::to_value(m).map_err(ServiceError::from)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocRef {
    pub doc_id: String,
    pub text: String,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicCard {
    pub topic_id: i64,
    pub name: Option<String>,
    pub theme: Option<String>,
    pub size: usize,
    pub representative: DocRef,
    /// Most probable members after the representative.
    pub samples: Vec<DocRef>,
    /// Trend bucket counts, oldest first.
    pub sparkline: Vec<u64>,
    pub direction: Option<Direction>,
}

#[derive(Deserialize)]
struct SampleQuery {
    samples: Option<usize>,
}

async fn current_topics(run: &Arc<RunData>) -> Result<Vec<Topic>, ApiError> {
    let journal = Journal::new(run.dir.clone());
    let mutations = blocking(move || journal.mutations()).await?;
    let mut topics = run.topics.clone();
    apply_mutations(&mut topics, &mutations);
    Ok(topics)
}

fn card(run: &RunData, topic: &Topic, samples: usize) -> TopicCard {
    let prob: HashMap<&str, f64> = run
        .assignments
        .iter()
        .map(|a| (a.doc_id.as_str(), a.probability))
        .collect();
    let doc = |id: &str| DocRef {
        doc_id: id.to_string(),
        text: run.comments.get(id).map(|c| c.text.clone()).unwrap_or_default(),
        probability: prob.get(id).copied().unwrap_or(0.0),
    };
    let mut members: Vec<&String> = topic
        .member_ids
        .iter()
        .filter(|m| **m != topic.representative_id)
        .collect();
    members.sort_by(|a, b| {
        prob[a.as_str()]
            .total_cmp(&prob[b.as_str()])
            .reverse()
            .then_with(|| a.cmp(b))
    });
    let trend = run.trends.iter().find(|t| t.topic_id == topic.topic_id);
    TopicCard {
        topic_id: topic.topic_id,
        name: topic.name.clone(),
        theme: topic.theme.clone(),
        size: topic.size,
        representative: doc(&topic.representative_id),
        samples: members.into_iter().take(samples).map(|m| doc(m)).collect(),
        sparkline: trend.map(|t| t.buckets.iter().map(|b| b.count).collect()).unwrap_or_default(),
        direction: trend.map(|t| t.direction),
    }
}

async fn topics(
    State(state): State<AppState>,
    Path(run): Path<String>,
    Query(q): Query<SampleQuery>,
) -> ApiResult<Vec<TopicCard>> {
    let data = state.run(&run).await?;
    let topics = current_topics(&data).await?;
    let n = q.samples.unwrap_or(DEFAULT_SAMPLES).min(MAX_SAMPLES);
    Ok(Json(topics.iter().map(|t| card(&data, t, n)).collect()))
}

async fn topic(
    State(state): State<AppState>,
    Path((run, topic_id)): Path<(String, i64)>,
    Query(q): Query<SampleQuery>,
) -> ApiResult<TopicCard> {
    let data = state.run(&run).await?;
    let topics = current_topics(&data).await?;
    let t = topics
        .iter()
        .find(|t| t.topic_id == topic_id)
        .ok_or_else(|| ServiceError::NotFound(format!("unknown topic {topic_id}")))?;
    Ok(Json(card(&data, t, q.samples.unwrap_or(20).min(MAX_SAMPLES))))
}

#[derive(Deserialize)]
struct NameBody {
    name: Option<String>,
    #[serde(default)]
    editor: Option<String>,
}

#[derive(Deserialize)]
struct ThemeBody {
    theme: Option<String>,
    #[serde(default)]
    editor: Option<String>,
}

async fn mutate(
    state: AppState,
    run: String,
    topic_id: i64,
    field: TopicField,
    value: Option<String>,
    editor: Option<String>,
) -> ApiResult<TopicCard> {
    let data = state.run(&run).await?;
    {
        let _guard = state.inner.writes.lock().await;
        let d = data.clone();
        blocking(move || Journal::new(d.dir.clone()).mutate(&d.topics, topic_id, field, value, editor)).await?;
    }
    let topics = current_topics(&data).await?;
    let t = topics.iter().find(|t| t.topic_id == topic_id).expect("validated by mutate");
    Ok(Json(card(&data, t, DEFAULT_SAMPLES)))
}

async fn set_name(
    State(state): State<AppState>,
    Path((run, topic_id)): Path<(String, i64)>,
    body: Bytes,
) -> ApiResult<TopicCard> {
    let b: NameBody = parse_body(&body)?;
    mutate(state, run, topic_id, TopicField::Name, b.name, b.editor).await
}

async fn set_theme(
    State(state): State<AppState>,
    Path((run, topic_id)): Path<(String, i64)>,
    body: Bytes,
) -> ApiResult<TopicCard> {
    let b: ThemeBody = parse_body(&body)?;
    mutate(state, run, topic_id, TopicField::Theme, b.theme, b.editor).await
}

#[derive(Serialize)]
struct Point {
    doc_id: String,
    x: f32,
    y: f32,
    label: i64,
}

async fn projection(State(state): State<AppState>, Path(run): Path<String>) -> ApiResult<Value> {
    let data = state.run(&run).await?;
    let labels: HashMap<&str, i64> = data.assignments.iter().map(|a| (a.doc_id.as_str(), a.label)).collect();
    let points: Vec<Point> = data
        .projection
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let row = data.projection.points.row(i);
            Point {
                doc_id: id.clone(),
                x: row[0],
                y: row[1],
                label: labels.get(id.as_str()).copied().unwrap_or(-1),
            }
        })
        .collect();
    Ok(Json(json!({ "points": points })))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrendPanels {
    pub rising: Vec<TrendSeries>,
    pub falling: Vec<TrendSeries>,
    pub flat: Vec<TrendSeries>,
}

/// Rising topics steepest first, falling topics steepest first.
pub fn partition_trends(series: &[TrendSeries]) -> TrendPanels {
    let pick = |d: Direction| -> Vec<TrendSeries> { series.iter().filter(|s| s.direction == d).cloned().collect() };
    let mut rising = pick(Direction::Rising);
    rising.sort_by(|a, b| b.slope.total_cmp(&a.slope).then(a.topic_id.cmp(&b.topic_id)));
    let mut falling = pick(Direction::Falling);
    falling.sort_by(|a, b| a.slope.total_cmp(&b.slope).then(a.topic_id.cmp(&b.topic_id)));
    TrendPanels {
        rising,
        falling,
        flat: pick(Direction::Flat),
    }
}

async fn trends(State(state): State<AppState>, Path(run): Path<String>) -> ApiResult<TrendPanels> {
    let data = state.run(&run).await?;
    Ok(Json(partition_trends(&data.trends)))
}

async fn stats(State(state): State<AppState>, Path(run): Path<String>) -> ApiResult<Value> {
    let data = state.run(&run).await?;
    Ok(Json(serde_json::to_value(&data.stats).map_err(ServiceError::from)?))
}

async fn silhouette(State(state): State<AppState>, Path(run): Path<String>) -> ApiResult<Value> {
    let data = state.run(&run).await?;
    Ok(Json(serde_json::to_value(&data.silhouette).map_err(ServiceError::from)?))
}

#[derive(Deserialize)]
struct AnnotatorQuery {
    annotator: Option<String>,
}

async fn load_tasks(state: &AppState, run: &str) -> Result<Vec<TaskRecord>, ApiError> {
    let store = state.store().clone();
    let run = run.to_string();
    blocking(move || store.load_tasks(&run)).await
}

async fn next_task(
    State(state): State<AppState>,
    Path(run): Path<String>,
    Query(q): Query<AnnotatorQuery>,
) -> ApiResult<Value> {
    let data = state.run(&run).await?;
    let tasks = load_tasks(&state, &run).await?;
    let annotator = q
        .annotator
        .ok_or_else(|| ServiceError::Invalid(vec!["annotator: query parameter is required".into()]))?;
    let _guard = state.inner.writes.lock().await;
    let seed = data.manifest.config.seed;
    let next = blocking(move || Journal::new(data.dir.clone()).next_task(&tasks, &annotator, seed)).await?;
    Ok(Json(serde_json::to_value(next).map_err(ServiceError::from)?))
}

async fn responses(
    State(state): State<AppState>,
    Path((run, task_id)): Path<(String, String)>,
) -> ApiResult<Value> {
    let data = state.run(&run).await?;
    let tasks = load_tasks(&state, &run).await?;
    let task = tasks
        .into_iter()
        .find(|t| t.task_id() == task_id)
        .ok_or_else(|| ServiceError::NotFound(format!("unknown task {task_id:?}")))?;
    let journal = Journal::new(data.dir.clone());
    let (annotations, adjudications) = blocking(move || Ok((journal.annotations()?, journal.adjudications()?))).await?;
    let annotations: Vec<_> = annotations.into_iter().filter(|a| a.annotation.task_id == task_id).collect();
    let adjudications: Vec<_> = adjudications
        .into_iter()
        .filter(|a| a.adjudication.task_id == task_id)
        .collect();
    Ok(Json(json!({
        "task": task,
        "annotations": annotations,
        "adjudications": adjudications,
    })))
}

async fn submit_annotation(
    State(state): State<AppState>,
    Path(run): Path<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let annotation: Annotation = parse_body(&body)?;
    let data = state.run(&run).await?;
    let tasks = load_tasks(&state, &run).await?;
    let _guard = state.inner.writes.lock().await;
    let stored = blocking(move || Journal::new(data.dir.clone()).submit(&tasks, annotation)).await?;
    Ok((
        StatusCode::CREATED,
        Json(serde_json::to_value(stored).map_err(ServiceError::from)?),
    ))
}

async fn submit_adjudication(
    State(state): State<AppState>,
    Path(run): Path<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let adjudication: Adjudication = parse_body(&body)?;
    let data = state.run(&run).await?;
    let tasks = load_tasks(&state, &run).await?;
    let _guard = state.inner.writes.lock().await;
    let stored = blocking(move || Journal::new(data.dir.clone()).adjudicate(&tasks, adjudication)).await?;
    Ok((
        StatusCode::CREATED,
        Json(serde_json::to_value(stored).map_err(ServiceError::from)?),
    ))
}

async fn reports(State(state): State<AppState>, Path(run): Path<String>) -> ApiResult<Value> {
    let data = state.run(&run).await?;
    let tasks = load_tasks(&state, &run).await?;
    let reports = blocking(move || {
        let journal = Journal::new(data.dir.clone());
        let annotations: Vec<Annotation> = journal.annotations()?.into_iter().map(|a| a.annotation).collect();
        let adjudications: Vec<Adjudication> =
            journal.adjudications()?.into_iter().map(|a| a.adjudication).collect();
        build_reports(&tasks, &annotations, &adjudications)
    })
    .await?;
    Ok(Json(serde_json::to_value(reports).map_err(ServiceError::from)?))
}

#[derive(Deserialize)]
struct AssignBody {
    text: String,
    #[serde(default)]
    neighbours: Option<usize>,
}

async fn assign(State(state): State<AppState>, Path(run): Path<String>, body: Bytes) -> ApiResult<Value> {
    let b: AssignBody = parse_body(&body)?;
    let data = state.run(&run).await?;
    let remote = state.inner.remote.clone();
    let result = blocking(move || {
        let mut config = data.manifest.config.clone();
        config.remote = remote;
        let backend = crate::remote::build_embedder(&config)?;
        assign_text(&data, backend.as_ref(), &b.text, b.neighbours.unwrap_or(DEFAULT_NEIGHBOURS))
    })
    .await?;
    Ok(Json(serde_json::to_value(result).map_err(ServiceError::from)?))
}
