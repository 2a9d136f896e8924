//! REST surface over the orchestrator.

use std::collections::HashMap;
use std::sync::{Arc, PoisonError};
use std::time::{Duration, SystemTime};

use axum::body::Bytes;
use axum::extract::multipart::MultipartError;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use outfitter_core::catalog::{self, CatalogSnapshot};
use outfitter_core::imaging::{decode_png, encode_png};
use outfitter_core::{
    Backends, CatalogError, ErrorCode, ItemKind, Orchestrator, Outcome, PipelineConfig,
    PipelineError, PromptTemplate, RasterImage, SessionStore, Threshold, TraceStep,
};
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use crate::config::ServiceConfig;
use crate::images::{is_image_id, ImageStore};

/// Room for the multipart framing and text fields around an image part.
const FORM_OVERHEAD_BYTES: usize = 64 * 1024;
const DEFAULT_SEARCH_K: usize = 5;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    orch: Orchestrator,
    sessions: SessionStore,
    images: ImageStore,
    permits: Arc<Semaphore>,
    config: ServiceConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("prompt template: {0}")]
    Template(#[from] outfitter_core::PromptError),
    #[error("backends: {0}")]
    Backend(#[from] outfitter_core::BackendError),
    #[error("catalog: {0}")]
    Catalog(#[from] CatalogError),
}

impl AppState {
    /// Loads the template and catalog and connects the configured backends.
    pub fn from_config(config: ServiceConfig) -> Result<Self, StartupError> {
        let template = match &config.template {
            Some(path) => PromptTemplate::from_file(path)?,
            None => PromptTemplate::builtin(),
        };
        let backends = Backends::from_configs(&config.backends)?;
        let catalog = match &config.catalog {
            Some(dir) => CatalogSnapshot::load(dir)?,
            None => CatalogSnapshot::empty(),
        };
        let pipeline = PipelineConfig {
            tau: config.tau,
            ..PipelineConfig::default()
        };
        let orch = Orchestrator::new(template, backends, catalog, pipeline);
        Ok(Self::new(orch, config))
    }

    pub fn new(orch: Orchestrator, config: ServiceConfig) -> Self {
        Self {
            inner: Arc::new(Inner {
                orch,
                sessions: SessionStore::new(),
                images: ImageStore::new(),
                permits: Arc::new(Semaphore::new(config.max_concurrency)),
                config,
            }),
        }
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.inner.orch
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.inner.sessions
    }

    pub fn images(&self) -> &ImageStore {
        &self.inner.images
    }

    /// Drops sessions idle past the TTL together with images no remaining
    /// session references. Returns the number of sessions removed.
    pub fn collect_garbage(&self, now: SystemTime) -> usize {
        let removed = self
            .inner
            .sessions
            .remove_idle(self.inner.config.session_ttl, now);
        for s in &removed {
            self.inner.images.release_session(s.session_id());
        }
        if !removed.is_empty() {
            tracing::info!(sessions = removed.len(), "expired idle sessions");
        }
        removed.len()
    }

    /// How often the background collector runs.
    pub fn gc_interval(&self) -> Duration {
        (self.inner.config.session_ttl / 4).clamp(Duration::from_secs(1), Duration::from_secs(60))
    }
}

pub fn router(state: AppState) -> Router {
    let body_limit = state.inner.config.max_upload_bytes + FORM_OVERHEAD_BYTES;
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route(
            "/v1/sessions/{id}/messages",
            post(post_message).layer(DefaultBodyLimit::max(body_limit)),
        )
        .route("/v1/sessions/{id}/trace", get(get_trace))
        .route("/v1/images/{id}", get(get_image))
        .route("/v1/catalog/search", get(search_catalog))
        .route("/admin/reload-catalog", post(reload_catalog))
        .route("/admin/tau", post(set_tau))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    extra: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            extra: None,
        }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"code": self.code, "message": self.message});
        if let (Some(Value::Object(extra)), Value::Object(map)) = (self.extra, &mut body) {
            map.extend(extra);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match e {
            PipelineError::SessionNotFound(_) => StatusCode::NOT_FOUND,
            PipelineError::NoPersonImage | PipelineError::EmptyMessage => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

fn multipart_error(e: MultipartError) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "PayloadTooLarge",
            e.body_text(),
        )
    } else {
        ApiError::bad_request("MalformedRequest", e.body_text())
    }
}

async fn create_session(State(st): State<AppState>) -> impl IntoResponse {
    let id = st.inner.sessions.create();
    tracing::info!(session = %id, "session created");
    (StatusCode::CREATED, Json(json!({"session_id": id})))
}

struct MessageForm {
    text: String,
    image: Option<RasterImage>,
    seed: Option<u64>,
}

async fn read_form(mut form: Multipart, max_upload: usize) -> Result<MessageForm, ApiError> {
    let mut text = None;
    let mut image_bytes = None;
    let mut seed = None;
    while let Some(field) = form.next_field().await.map_err(multipart_error)? {
        let name = field.name().unwrap_or_default().to_owned();
        match name.as_str() {
            "text" => text = Some(field.text().await.map_err(multipart_error)?),
            "image" => {
                let bytes = field.bytes().await.map_err(multipart_error)?;
                if bytes.len() > max_upload {
                    return Err(ApiError::new(
                        StatusCode::PAYLOAD_TOO_LARGE,
                        "PayloadTooLarge",
                        format!("image is {} bytes; the limit is {max_upload}", bytes.len()),
                    ));
                }
                image_bytes = Some(bytes);
            }
            "seed" => {
                let raw = field.text().await.map_err(multipart_error)?;
                let parsed = raw.trim().parse::<u64>().map_err(|_| {
                    ApiError::bad_request(
                        "MalformedRequest",
                        format!("seed `{raw}` is not an unsigned integer"),
                    )
                })?;
                seed = Some(parsed);
            }
            other => {
                return Err(ApiError::bad_request(
                    "MalformedRequest",
                    format!("unexpected form field `{other}`"),
                ));
            }
        }
    }
    let text =
        text.ok_or_else(|| ApiError::bad_request("MalformedRequest", "missing `text` field"))?;
    let image = match image_bytes {
        Some(bytes) => Some(decode_png(&bytes).map_err(|e| {
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "UndecodableImage",
                e.to_string(),
            )
        })?),
        None => None,
    };
    Ok(MessageForm { text, image, seed })
}

#[derive(Serialize)]
struct MessageResponse {
    session_id: String,
    reply: String,
    image_url: Option<String>,
    mask_url: Option<String>,
    input_url: Option<String>,
    trace: TraceStep,
}

fn image_url(id: &Option<String>) -> Option<String> {
    id.as_ref().map(|id| format!("/v1/images/{id}"))
}

async fn post_message(
    State(st): State<AppState>,
    Path(session_id): Path<String>,
    form: Multipart,
) -> Result<Response, ApiError> {
    let session = st.inner.sessions.get(&session_id)?;
    let form = read_form(form, st.inner.config.max_upload_bytes).await?;
    let _permit = st
        .inner
        .permits
        .clone()
        .acquire_owned()
        .await
        .map_err(|_| ApiError::internal("service is shutting down"))?;

    let worker = st.clone();
    let sid = session_id.clone();
    let (turn, input) = tokio::task::spawn_blocking(move || {
        let mut session = session.lock().unwrap_or_else(PoisonError::into_inner);
        let input = form
            .image
            .as_ref()
            .map(RasterImage::to_rgb)
            .or_else(|| session.current_image().cloned());
        let turn =
            worker
                .inner
                .orch
                .handle_message(&mut session, &form.text, form.image, form.seed)?;
        Ok::<_, PipelineError>((turn, input))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;

    let trace = &turn.trace;
    let images = &st.inner.images;
    let keep = |id: &Option<String>, image: Option<RasterImage>| {
        if let (Some(id), Some(image)) = (id, image) {
            images.put(id, encode_png(&image), &sid);
        }
    };
    keep(&trace.input_image_id, input);
    keep(&trace.output_image_id, turn.image.clone());
    keep(
        &trace.mask_image_id,
        turn.mask.as_ref().map(|m| m.to_gray()),
    );

    tracing::info!(
        session = %session_id,
        step = trace.step,
        outcome = ?trace.outcome,
        "message handled"
    );
    let body = MessageResponse {
        session_id,
        reply: turn.reply.clone(),
        image_url: image_url(&trace.output_image_id),
        mask_url: image_url(&trace.mask_image_id),
        input_url: image_url(&trace.input_image_id),
        trace: turn.trace.clone(),
    };
    if let Outcome::ErrorWithCode(err) = &trace.outcome {
        if matches!(
            err.code,
            ErrorCode::BackendUnavailable | ErrorCode::BackendTimeout
        ) {
            let mut e = ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                err.code.as_str(),
                err.message.clone(),
            );
            e.extra = Some(json!({
                "backend": err.backend,
                "reply": body.reply,
                "trace": body.trace,
            }));
            return Err(e);
        }
    }
    Ok(Json(body).into_response())
}

async fn get_trace(
    State(st): State<AppState>,
    Path(session_id): Path<String>,
) -> Result<Response, ApiError> {
    let session = st.inner.sessions.get(&session_id)?;
    let steps = tokio::task::spawn_blocking(move || {
        session
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .history()
            .to_vec()
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(json!({"session_id": session_id, "steps": steps})).into_response())
}

async fn get_image(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    if !is_image_id(&id) {
        return Err(ApiError::bad_request(
            "MalformedRequest",
            "image ids are 64 lowercase hex digits",
        ));
    }
    let png = st.inner.images.get(&id).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "ImageNotFound",
            format!("image `{id}` not found"),
        )
    })?;
    Ok((
        [
            (header::CONTENT_TYPE, "image/png"),
            (header::CACHE_CONTROL, "public, max-age=31536000, immutable"),
        ],
        png,
    )
        .into_response())
}

fn item_from_category(raw: &str) -> Result<ItemKind, ApiError> {
    let category: outfitter_core::Category = raw
        .parse()
        .map_err(|e: String| ApiError::bad_request("MalformedRequest", e))?;
    Ok(match category {
        outfitter_core::Category::Top => ItemKind::UpperBody,
        outfitter_core::Category::Bottom => ItemKind::LowerBody,
        outfitter_core::Category::Dress => ItemKind::FullBody,
    })
}

async fn search_catalog(
    State(st): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let q = params
        .get("q")
        .map(|q| q.trim().to_owned())
        .unwrap_or_default();
    if q.is_empty() {
        return Err(ApiError::bad_request(
            "MalformedRequest",
            "query parameter `q` is required",
        ));
    }
    let k = match params.get("k") {
        Some(raw) => match raw.parse::<usize>() {
            Ok(k) if k > 0 => k,
            _ => {
                return Err(ApiError::bad_request(
                    "MalformedRequest",
                    "`k` must be a positive integer",
                ))
            }
        },
        None => DEFAULT_SEARCH_K,
    };
    let item = match params.get("category") {
        Some(raw) => item_from_category(raw)?,
        None => ItemKind::Unspecified,
    };

    let worker = st.clone();
    let result = tokio::task::spawn_blocking(move || {
        let snapshot = worker.inner.orch.catalog();
        let catalog = snapshot.catalog();
        let hits = match catalog::search(catalog, &q, k, &*worker.inner.orch.backends().embed, item)
        {
            Ok(hits) => hits,
            Err(CatalogError::Match(outfitter_core::MatchError::EmptyCatalog)) => Vec::new(),
            Err(e) => return Err(e),
        };
        let results: Vec<Value> = hits
            .into_iter()
            .enumerate()
            .map(|(rank, (id, score))| {
                let record = catalog.get(&id).expect("search returns catalog ids");
                json!({
                    "rank": rank + 1,
                    "garment_id": id,
                    "category": record.category,
                    "caption": record.caption,
                    "score": score,
                })
            })
            .collect();
        Ok(json!({"catalog_version": catalog.catalog_version(), "results": results}))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?;

    match result {
        Ok(body) => Ok(Json(body).into_response()),
        Err(CatalogError::Backend(e)) => {
            let mut err = ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "BackendUnavailable",
                e.to_string(),
            );
            err.extra = Some(json!({"backend": e.kind()}));
            Err(err)
        }
        Err(e) => Err(ApiError::internal(e.to_string())),
    }
}

async fn reload_catalog(State(st): State<AppState>) -> Result<Response, ApiError> {
    let Some(dir) = st.inner.config.catalog.clone() else {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "NoCatalogConfigured",
            "the service was started without a catalog path",
        ));
    };
    let loaded = tokio::task::spawn_blocking(move || CatalogSnapshot::load(&dir))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let snapshot = loaded.map_err(|e| {
        tracing::error!(error = %e, "catalog reload failed; keeping the current catalog");
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "CatalogError",
            e.to_string(),
        )
    })?;
    let version = snapshot.catalog().catalog_version();
    let records = snapshot.catalog().len();
    st.inner.orch.swap_catalog(snapshot);
    tracing::info!(version, records, "catalog reloaded");
    Ok(Json(json!({"catalog_version": version, "records": records})).into_response())
}

async fn set_tau(State(st): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let value: Value = serde_json::from_slice(&body).map_err(|e| {
        ApiError::bad_request("MalformedRequest", format!("body must be JSON: {e}"))
    })?;
    let tau = value
        .get("tau")
        .and_then(Value::as_f64)
        .ok_or_else(|| ApiError::bad_request("MalformedRequest", "expected {\"tau\": <number>}"))?;
    let tau =
        Threshold::new(tau).map_err(|e| ApiError::bad_request("InvalidTau", e.to_string()))?;
    st.inner.orch.set_tau(tau);
    tracing::info!(tau = tau.value(), "routing threshold updated");
    Ok(Json(json!({"tau": tau.value()})).into_response())
}

/// Binds the configured address and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let listen = config.listen;
    let state = AppState::from_config(config)?;
    let gc = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(gc.gc_interval());
        loop {
            tick.tick().await;
            gc.collect_garbage(SystemTime::now());
        }
    });
    let listener = tokio::net::TcpListener::bind(listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
