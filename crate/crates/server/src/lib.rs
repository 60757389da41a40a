//! HTTP/JSON backend for exploring a fitted anomaly plane.
//!
//! One process serves one dataset. All state lives in a [`Session`] behind a
//! read/write lock: reads share a consistent snapshot, while refits,
//! reclassifications and marks are serialized through the write half. Every
//! response carries the model generation in the `X-Biknn-Generation` header.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use biknn::classify::{axis_thresholds, classify_with_thresholds};
use biknn::{Aggregator, BiknnError, BiknnModel, BiknnParams, Dataset, OutlierType, TypeCounts};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::RwLock;
use tower_http::services::ServeDir;

pub const GENERATION_HEADER: &str = "x-biknn-generation";

/// Grid resolution used when the query string omits one.
pub const DEFAULT_GRID_RESOLUTION: usize = 100;
pub const MAX_GRID_RESOLUTION: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error(transparent)]
    Model(#[from] BiknnError),
    #[error("marks file {path}: {source}")]
    Marks {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("marks file {path}: {message}")]
    BadMarks { path: PathBuf, message: String },
}

/// How the current classification was obtained; reapplied after a refit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Rule {
    Count { m: usize },
    Thresholds { t_e: f64, t_p: f64 },
}

#[derive(Debug)]
pub struct Session {
    dataset: Arc<Dataset>,
    model: Arc<BiknnModel>,
    rule: Rule,
    thresholds: (f64, f64),
    types: Vec<OutlierType>,
    generation: u64,
    marks: BTreeSet<usize>,
    marks_path: Option<PathBuf>,
}

/// Conventional location of the marks file for an input path.
pub fn marks_path_for(input: &Path) -> PathBuf {
    let mut s = input.as_os_str().to_owned();
    s.push(".marks.json");
    PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
struct MarksFile {
    marks: Vec<usize>,
}

impl Session {
    /// Fit the initial model and classify with `m` expected outliers per axis.
    /// Existing marks at `marks_path` are loaded.
    pub fn new(
        dataset: Dataset,
        params: &BiknnParams,
        m: usize,
        marks_path: Option<PathBuf>,
    ) -> Result<Self, ServerError> {
        let model = BiknnModel::fit(dataset.features(), params)?;
        let rule = Rule::Count { m };
        let (thresholds, types) = apply_rule(&model, rule)?;
        let marks = match &marks_path {
            Some(p) if p.exists() => load_marks(p, dataset.n())?,
            _ => BTreeSet::new(),
        };
        Ok(Self {
            dataset: Arc::new(dataset),
            model: Arc::new(model),
            rule,
            thresholds,
            types,
            generation: 1,
            marks,
            marks_path,
        })
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn model(&self) -> &BiknnModel {
        &self.model
    }

    pub fn types(&self) -> &[OutlierType] {
        &self.types
    }

    pub fn marks(&self) -> &BTreeSet<usize> {
        &self.marks
    }

    fn persist_marks(&self) -> Result<(), ServerError> {
        let Some(path) = &self.marks_path else {
            return Ok(());
        };
        let body = MarksFile {
            marks: self.marks.iter().copied().collect(),
        };
        let text = serde_json::to_string_pretty(&body).expect("marks serialize");
        // write-then-rename so a crash never leaves a truncated file
        let tmp = path.with_extension("json.tmp");
        let io = |source| ServerError::Marks {
            path: path.clone(),
            source,
        };
        std::fs::write(&tmp, text).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }
}

fn load_marks(path: &Path, n: usize) -> Result<BTreeSet<usize>, ServerError> {
    let text = std::fs::read_to_string(path).map_err(|source| ServerError::Marks {
        path: path.into(),
        source,
    })?;
    let bad = |message: String| ServerError::BadMarks {
        path: path.into(),
        message,
    };
    let file: MarksFile = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if let Some(id) = file.marks.iter().find(|&&id| id >= n) {
        return Err(bad(format!("id {id} out of range for {n} points")));
    }
    Ok(file.marks.into_iter().collect())
}

fn apply_rule(
    model: &BiknnModel,
    rule: Rule,
) -> Result<((f64, f64), Vec<OutlierType>), BiknnError> {
    let space = model.train_space();
    let (t_e, t_p) = match rule {
        Rule::Count { m } => axis_thresholds(space, m)?,
        Rule::Thresholds { t_e, t_p } => (t_e, t_p),
    };
    Ok(((t_e, t_p), classify_with_thresholds(space, t_e, t_p)))
}

pub type SharedSession = Arc<RwLock<Session>>;

struct ApiError {
    status: StatusCode,
    message: String,
    generation: u64,
}

impl ApiError {
    fn new(status: StatusCode, generation: u64, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            generation,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        tagged(
            self.status,
            self.generation,
            json!({ "error": self.message }),
        )
    }
}

fn tagged(status: StatusCode, generation: u64, body: Value) -> Response {
    let mut resp = (status, Json(body)).into_response();
    resp.headers_mut().insert(
        HeaderName::from_static(GENERATION_HEADER),
        HeaderValue::from(generation),
    );
    resp
}

fn ok(generation: u64, body: Value) -> Response {
    tagged(StatusCode::OK, generation, body)
}

/// Strict JSON body parsing: any syntax, type or unknown-field problem is a 400.
fn parse_body<T: serde::de::DeserializeOwned>(
    body: &Bytes,
    generation: u64,
) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            generation,
            format!("malformed body: {e}"),
        )
    })
}

fn classification_json(s: &Session) -> Value {
    json!({
        "generation": s.generation,
        "rule": s.rule,
        "thresholds": { "t_e": s.thresholds.0, "t_p": s.thresholds.1 },
        "types": s.types,
        "counts": TypeCounts::tally(&s.types),
    })
}

async fn get_space(State(state): State<SharedSession>) -> Response {
    let s = state.read().await;
    let labels = s.dataset.labels();
    let points: Vec<Value> = s
        .model
        .train_space()
        .iter()
        .enumerate()
        .map(|(id, p)| {
            let mut v = json!({ "id": id, "k_e": p.k_e, "k_p": p.k_p });
            if let Some(l) = labels {
                v["label"] = json!(l[id]);
            }
            v
        })
        .collect();
    let robust = s.model.robust();
    let mut body = classification_json(&s);
    body["points"] = json!(points);
    body["robust"] = json!({ "center": robust.center, "scatter": robust.scatter });
    body["params"] = json!(s.model.params());
    ok(s.generation, body)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ClassifyRequest {
    Count { m: usize },
    Thresholds { t_e: f64, t_p: f64 },
}

async fn post_classify(
    State(state): State<SharedSession>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let mut s = state.write().await;
    let gen = s.generation;
    let req: ClassifyRequest = parse_body(&body, gen)?;
    let rule = match req {
        ClassifyRequest::Count { m } => Rule::Count { m },
        ClassifyRequest::Thresholds { t_e, t_p } => Rule::Thresholds { t_e, t_p },
    };
    let (thresholds, types) = apply_rule(&s.model, rule)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, gen, e.to_string()))?;
    s.rule = rule;
    s.thresholds = thresholds;
    s.types = types;
    Ok(ok(gen, classification_json(&s)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsRequest {
    k: Option<usize>,
    w1: Option<f64>,
    w2: Option<f64>,
    mu: Option<f64>,
    agg: Option<Aggregator>,
}

async fn post_params(
    State(state): State<SharedSession>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let mut s = state.write().await;
    let gen = s.generation;
    let req: ParamsRequest = parse_body(&body, gen)?;
    let mut params = s.model.params().clone();
    if let Some(k) = req.k {
        params.k = k;
    }
    if let Some(w1) = req.w1 {
        params.w1 = w1;
    }
    if let Some(w2) = req.w2 {
        params.w2 = w2;
    }
    if let Some(mu) = req.mu {
        params.mu = mu;
    }
    if let Some(agg) = req.agg {
        params.agg = agg;
    }
    let conflict = |e: String| ApiError::new(StatusCode::CONFLICT, gen, e);
    let dataset = Arc::clone(&s.dataset);
    let rule = s.rule;
    // the write lock is held across the refit: the request only returns once
    // the new generation is in place
    let fitted = tokio::task::spawn_blocking(move || {
        let model = BiknnModel::fit(dataset.features(), &params)?;
        let classified = apply_rule(&model, rule)?;
        Ok::<_, BiknnError>((model, classified))
    })
    .await
    .map_err(|e| conflict(format!("refit aborted: {e}")))?
    .map_err(|e| conflict(e.to_string()))?;
    let (model, (thresholds, types)) = fitted;
    s.model = Arc::new(model);
    s.thresholds = thresholds;
    s.types = types;
    s.generation += 1;
    tracing::info!(generation = s.generation, "refit");
    let body = json!({ "generation": s.generation, "params": s.model.params() });
    Ok(ok(s.generation, body))
}

async fn get_scores(State(state): State<SharedSession>) -> Response {
    let s = state.read().await;
    ok(
        s.generation,
        json!({ "generation": s.generation, "scores": s.model.train_scores() }),
    )
}

#[derive(Deserialize)]
struct GridQuery {
    resolution: Option<usize>,
}

/// Bounding box of 2D data, padded by 5% of the range on each side.
pub fn grid_bounds(ds: &Dataset) -> ([f64; 2], [f64; 2]) {
    let mut mins = [f64::INFINITY; 2];
    let mut maxs = [f64::NEG_INFINITY; 2];
    for row in ds.features().outer_iter() {
        for j in 0..2 {
            mins[j] = mins[j].min(row[j]);
            maxs[j] = maxs[j].max(row[j]);
        }
    }
    for j in 0..2 {
        let pad = 0.05 * (maxs[j] - mins[j]).max(1e-9);
        mins[j] -= pad;
        maxs[j] += pad;
    }
    (mins, maxs)
}

async fn get_grid(
    State(state): State<SharedSession>,
    query: Result<Query<GridQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Response, ApiError> {
    let (model, dataset, gen) = {
        let s = state.read().await;
        (Arc::clone(&s.model), Arc::clone(&s.dataset), s.generation)
    };
    if dataset.d() != 2 {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            gen,
            format!("grid needs 2-dimensional data, dataset has {}", dataset.d()),
        ));
    }
    let Query(q) = query.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, gen, e.body_text()))?;
    let res = q.resolution.unwrap_or(DEFAULT_GRID_RESOLUTION);
    if !(2..=MAX_GRID_RESOLUTION).contains(&res) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            gen,
            format!("resolution must lie in [2, {MAX_GRID_RESOLUTION}], got {res}"),
        ));
    }
    let (mins, maxs) = grid_bounds(&dataset);
    let grid = tokio::task::spawn_blocking(move || model.score_grid(mins, maxs, res))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, gen, e.to_string()))?
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, gen, e.to_string()))?;
    let rows: Vec<Vec<f64>> = grid.outer_iter().map(|r| r.to_vec()).collect();
    Ok(ok(
        gen,
        json!({
            "generation": gen,
            "resolution": res,
            "xmin": mins[0], "xmax": maxs[0], "ymin": mins[1], "ymax": maxs[1],
            "values": rows,
        }),
    ))
}

async fn get_original(State(state): State<SharedSession>) -> Result<Response, ApiError> {
    let s = state.read().await;
    if s.dataset.d() != 2 {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            s.generation,
            format!(
                "original coordinates are only served for 2-dimensional data, dataset has {}",
                s.dataset.d()
            ),
        ));
    }
    let points: Vec<Value> = (0..s.dataset.n())
        .map(|id| {
            let r = s.dataset.row(id);
            json!({ "id": id, "x": r[0], "y": r[1] })
        })
        .collect();
    Ok(ok(
        s.generation,
        json!({ "generation": s.generation, "points": points }),
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkRequest {
    id: usize,
    marked: bool,
}

fn marks_json(s: &Session) -> Value {
    json!({ "generation": s.generation, "marks": s.marks.iter().collect::<Vec<_>>() })
}

async fn post_mark(State(state): State<SharedSession>, body: Bytes) -> Result<Response, ApiError> {
    let mut s = state.write().await;
    let gen = s.generation;
    let req: MarkRequest = parse_body(&body, gen)?;
    if req.id >= s.dataset.n() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            gen,
            format!("id {} out of range for {} points", req.id, s.dataset.n()),
        ));
    }
    let changed = if req.marked {
        s.marks.insert(req.id)
    } else {
        s.marks.remove(&req.id)
    };
    if changed {
        if let Err(e) = s.persist_marks() {
            // roll back so memory and disk agree
            if req.marked {
                s.marks.remove(&req.id);
            } else {
                s.marks.insert(req.id);
            }
            return Err(ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                gen,
                e.to_string(),
            ));
        }
    }
    Ok(ok(gen, marks_json(&s)))
}

async fn get_marks(State(state): State<SharedSession>) -> Response {
    let s = state.read().await;
    ok(s.generation, marks_json(&s))
}

async fn tag_generation(State(state): State<SharedSession>, mut resp: Response) -> Response {
    let name = HeaderName::from_static(GENERATION_HEADER);
    if !resp.headers().contains_key(&name) {
        let gen = state.read().await.generation;
        resp.headers_mut().insert(name, HeaderValue::from(gen));
    }
    resp
}

/// All API routes, plus an optional static directory served at `/`.
pub fn router(state: SharedSession, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/space", get(get_space))
        .route("/api/classify", post(post_classify))
        .route("/api/params", post(post_params))
        .route("/api/scores", get(get_scores))
        .route("/api/grid", get(get_grid))
        .route("/api/original", get(get_original))
        .route("/api/mark", post(post_mark))
        .route("/api/marks", get(get_marks));
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(axum::middleware::map_response_with_state(
        state.clone(),
        tag_generation,
    ))
    .with_state(state)
}

/// Bind and serve until the process is terminated.
pub async fn serve(
    session: Session,
    addr: SocketAddr,
    static_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_on(listener, Arc::new(RwLock::new(session)), static_dir).await
}

/// Serve on an already bound listener.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: SharedSession,
    static_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state, static_dir)).await
}
