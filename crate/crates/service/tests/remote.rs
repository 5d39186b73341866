use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use comment_topics_core::embedding::{Embedder, EmbedderConfig};
use comment_topics_core::EmbedError;
use comment_topics_service::config::{PipelineConfig, RemoteConfig};
use comment_topics_service::remote::{build_embedder, RemoteEmbedder};
use serde_json::{json, Value};

#[derive(Clone)]
struct Mock {
    /// Requests answered with 503 before the server starts working.
    failures: usize,
    width: usize,
    calls: Arc<AtomicUsize>,
}

async fn embed(State(m): State<Mock>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let n = m.calls.fetch_add(1, Ordering::SeqCst);
    if n < m.failures {
        return (StatusCode::SERVICE_UNAVAILABLE, Json(json!({})));
    }
    if body["model"] != "test-model" {
        return (StatusCode::BAD_REQUEST, Json(json!({"error": "unknown model"})));
    }
    let rows: Vec<Vec<f32>> = body["sentences"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| (0..m.width).map(|i| (s.as_str().unwrap().len() + i) as f32).collect())
        .collect();
    (StatusCode::OK, Json(json!({ "embeddings": rows })))
}

/// Starts a mock server on its own runtime thread.
fn serve(mock: Mock) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let app = Router::new().route("/embed", post(embed)).with_state(mock);
            axum::serve(listener, app).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn client(addr: SocketAddr, model: &str, dimension: usize, retries: u32) -> RemoteEmbedder {
    let remote = RemoteConfig {
        url: format!("http://{addr}/embed"),
        timeout_ms: 5_000,
        retries,
        backoff_ms: 1,
    };
    let embedder = EmbedderConfig {
        model_name: model.into(),
        dimension,
        ..Default::default()
    };
    RemoteEmbedder::new(remote, &embedder).unwrap()
}

fn mock(failures: usize, width: usize) -> (Mock, Arc<AtomicUsize>) {
    let calls = Arc::new(AtomicUsize::new(0));
    (
        Mock {
            failures,
            width,
            calls: calls.clone(),
        },
        calls,
    )
}

fn sentences() -> Vec<String> {
    vec!["hello".into(), "network down".into()]
}

#[test]
fn rows_come_back_in_request_order() {
    let (m, _) = mock(0, 4);
    let rows = client(serve(m), "test-model", 4, 0).embed_batch(&sentences()).unwrap();
    assert_eq!(rows, vec![vec![5.0, 6.0, 7.0, 8.0], vec![12.0, 13.0, 14.0, 15.0]]);
}

#[test]
fn server_errors_are_retried_with_backoff() {
    let (m, calls) = mock(2, 4);
    let addr = serve(m);
    assert!(client(addr, "test-model", 4, 2).embed_batch(&sentences()).is_ok());
    assert_eq!(calls.load(Ordering::SeqCst), 3);

    let (m, calls) = mock(5, 4);
    let err = client(serve(m), "test-model", 4, 1).embed_batch(&sentences()).unwrap_err();
    assert!(matches!(err, EmbedError::Unavailable(_)), "{err}");
    assert_eq!(calls.load(Ordering::SeqCst), 2);
}

#[test]
fn client_errors_and_bad_shapes_are_not_retried() {
    let (m, calls) = mock(0, 4);
    let addr = serve(m);
    let err = client(addr, "other-model", 4, 3).embed_batch(&sentences()).unwrap_err();
    assert!(matches!(err, EmbedError::Input(_)), "{err}");
    assert_eq!(calls.load(Ordering::SeqCst), 1);

    let err = client(addr, "test-model", 8, 3).embed_batch(&sentences()).unwrap_err();
    assert!(matches!(err, EmbedError::DimensionMismatch { expected: 8, actual: 4 }), "{err}");
}

#[test]
fn unreachable_servers_are_unavailable() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = client(addr, "test-model", 4, 0).embed_batch(&sentences()).unwrap_err();
    assert!(err.is_retriable(), "{err}");
}

#[test]
fn backend_selection_follows_the_config() {
    let hashing = build_embedder(&PipelineConfig::default()).unwrap();
    assert_eq!(hashing.dimension(), 768);
    let mut remote = PipelineConfig::default();
    remote.embedder.backend_id = "remote".into();
    assert!(build_embedder(&remote).is_err(), "remote needs a url");
    remote.remote = Some(RemoteConfig {
        url: "http://127.0.0.1:9/embed".into(),
        timeout_ms: 100,
        retries: 0,
        backoff_ms: 1,
    });
    assert!(build_embedder(&remote).is_ok());
}
