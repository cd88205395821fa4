//! Remote embedding client and the search service, both over real sockets.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use docret::cli::{router, AppState, SearchResponse};
use docret::index::{build_dense_index, StoredIndex};
use docret::providers::{EmbedInput, EmbeddingProvider, RemoteProvider, SyntheticProvider};
use docret::{DocId, Error};

fn spawn(app: Router) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

#[derive(Default)]
struct Load {
    now: AtomicUsize,
    peak: AtomicUsize,
}

/// Dense: `[word count, 1, 0]`. Multivector: one `[1, i, 0]` row per word.
async fn embed(load: Arc<Load>, Json(body): Json<Value>) -> Json<Value> {
    let now = load.now.fetch_add(1, Ordering::SeqCst) + 1;
    load.peak.fetch_max(now, Ordering::SeqCst);
    tokio::time::sleep(Duration::from_millis(20)).await;
    load.now.fetch_sub(1, Ordering::SeqCst);
    let inputs: Vec<&str> = body["inputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    let out: Vec<Value> = match body["mode"].as_str().unwrap() {
        "dense" => inputs
            .iter()
            .map(|t| json!([t.split_whitespace().count() as f32, 1.0, 0.0]))
            .collect(),
        _ => inputs
            .iter()
            .map(|t| {
                json!((0..t.split_whitespace().count())
                    .map(|i| vec![1.0, i as f32, 0.0])
                    .collect::<Vec<_>>())
            })
            .collect(),
    };
    Json(json!({ "embeddings": out }))
}

fn embed_server() -> (String, Arc<Load>) {
    let load = Arc::new(Load::default());
    let l = load.clone();
    let app = Router::new()
        .route("/ok/embed", post(move |b| embed(l.clone(), b)))
        .route(
            "/down/embed",
            post(|| async { (StatusCode::INTERNAL_SERVER_ERROR, "boom") }),
        )
        .route("/short/embed", post(|| async { Json(json!({ "embeddings": [] })) }));
    (format!("http://{}", spawn(app)), load)
}

#[test]
fn remote_dense_and_multivector() {
    let (base, _) = embed_server();
    let p = RemoteProvider::new(&format!("{base}/ok"), 5_000, 8).unwrap();
    let d = p.embed_dense(&EmbedInput::text("one two three four")).unwrap();
    let inv = 1.0 / 17f32.sqrt();
    assert!((d.values()[0] - 4.0 * inv).abs() < 1e-6 && (d.values()[1] - inv).abs() < 1e-6);
    assert!(d.is_unit());

    let m = p.embed_multivector(&EmbedInput::text("a b c d e"), 3).unwrap();
    assert_eq!((m.n_tokens(), m.dim()), (3, 3));
    assert!(m.rows_are_unit());
    assert_eq!(m.row(0), &[1.0, 0.0, 0.0]);

    let texts: Vec<String> = (1..=70).map(|n| vec!["w"; n].join(" ")).collect();
    let inputs: Vec<EmbedInput> = texts.iter().map(|t| EmbedInput::text(t)).collect();
    let batch = p.embed_dense_batch(&inputs).unwrap();
    assert_eq!(batch.len(), 70);
    let expect = 70.0 / (70.0f32 * 70.0 + 1.0).sqrt();
    assert!((batch[69].values()[0] - expect).abs() < 1e-6);
}

#[test]
fn remote_failures() {
    let (base, _) = embed_server();
    let down = RemoteProvider::new(&format!("{base}/down"), 5_000, 8).unwrap();
    assert!(matches!(
        down.embed_dense(&EmbedInput::text("x")),
        Err(Error::RemoteUnavailable(_))
    ));
    let short = RemoteProvider::new(&format!("{base}/short"), 5_000, 8).unwrap();
    assert!(matches!(
        short.embed_dense(&EmbedInput::text("x")),
        Err(Error::RemoteUnavailable(_))
    ));
    let ok = RemoteProvider::new(&format!("{base}/ok"), 5_000, 8).unwrap();
    assert!(matches!(ok.embed_dense(&EmbedInput::text("  ")), Err(Error::EmptyText)));
    let closed = RemoteProvider::new("http://127.0.0.1:9", 2_000, 1).unwrap();
    assert!(matches!(
        closed.embed_dense(&EmbedInput::text("x")),
        Err(Error::RemoteUnavailable(_))
    ));
    assert!(matches!(RemoteProvider::new(&base, 0, 1), Err(Error::InvalidConfig(_))));
}

#[test]
fn remote_in_flight_is_bounded() {
    let (base, load) = embed_server();
    let p = Arc::new(RemoteProvider::new(&format!("{base}/ok"), 5_000, 2).unwrap());
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let p = p.clone();
            std::thread::spawn(move || p.embed_dense(&EmbedInput::text("a b")).unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    let peak = load.peak.load(Ordering::SeqCst);
    assert!((1..=2).contains(&peak), "peak {peak}");
}

fn search_service(docs: &[(&str, &str)]) -> (String, Arc<AppState>) {
    let provider = SyntheticProvider::new(7, 32).unwrap();
    let records = docs
        .iter()
        .map(|(id, text)| (DocId::new(*id).unwrap(), provider.embed_text(text).unwrap()))
        .collect();
    let index = build_dense_index(records, None).unwrap();
    let state = Arc::new(AppState::new(Box::new(provider), 32, 2));
    let url = format!("http://{}", spawn(router(state.clone())));
    state.set_index(StoredIndex::Dense(index));
    (url, state)
}

fn post_search(url: &str, body: &str) -> (u16, String) {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut r = agent
        .post(&format!("{url}/search"))
        .header("content-type", "application/json")
        .send(body)
        .unwrap();
    (r.status().as_u16(), r.body_mut().read_to_string().unwrap())
}

#[test]
fn search_service_answers() {
    let (url, _) = search_service(&[("d1", "red cat"), ("d2", "blue whale"), ("d3", "green frog")]);
    let agent = ureq::agent();
    let health = agent
        .get(&format!("{url}/healthz"))
        .call()
        .unwrap()
        .body_mut()
        .read_to_string()
        .unwrap();
    assert_eq!(health, "ok");

    let (status, body) = post_search(&url, r#"{"query": "blue whale", "k": 2}"#);
    assert_eq!(status, 200);
    let resp: SearchResponse = serde_json::from_str(&body).unwrap();
    assert_eq!(resp.results.len(), 2);
    assert_eq!(resp.results[0].id, "d2");
    assert_eq!(resp.results.iter().map(|h| h.rank).collect::<Vec<_>>(), [1, 2]);
    assert!(resp.results[0].score >= resp.results[1].score);

    let (status, body) = post_search(&url, r#"{"query": "blue"}"#);
    assert_eq!(status, 200);
    assert_eq!(serde_json::from_str::<SearchResponse>(&body).unwrap().results.len(), 3);

    assert_eq!(post_search(&url, "{not json").0, 400);
    assert_eq!(post_search(&url, r#"{"query": "x", "extra": 1}"#).0, 400);
    assert_eq!(post_search(&url, r#"{"query": ""}"#).0, 400);
    assert_eq!(post_search(&url, r#"{"query": "x", "mode": "fuzzy"}"#).0, 400);
}

#[test]
fn single_document_index() {
    let (url, _) = search_service(&[("only", "lonely page")]);
    let (status, body) = post_search(&url, r#"{"query": "anything", "k": 1}"#);
    assert_eq!(status, 200);
    let resp: SearchResponse = serde_json::from_str(&body).unwrap();
    assert_eq!(resp.results.len(), 1);
    assert_eq!(resp.results[0].id, "only");
}

#[test]
fn unavailable_until_loaded() {
    let state = Arc::new(AppState::new(Box::new(SyntheticProvider::new(1, 16).unwrap()), 32, 1));
    let url = format!("http://{}", spawn(router(state.clone())));
    assert!(!state.is_ready());
    assert_eq!(post_search(&url, r#"{"query": "x"}"#).0, 503);
    let p = SyntheticProvider::new(1, 16).unwrap();
    let ix = build_dense_index(vec![(DocId::new("a").unwrap(), p.embed_text("a").unwrap())], None).unwrap();
    state.set_index(StoredIndex::Dense(ix));
    assert_eq!(post_search(&url, r#"{"query": "x"}"#).0, 200);
}
