//! Session state and the per-message orchestration flow.

mod orchestrator;

pub use orchestrator::{Edit, Orchestrator, PipelineConfig, StepContext, StepLog};

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, PoisonError};
use std::time::{Duration, SystemTime};

use serde::Serialize;
use thiserror::Error;

use crate::backends::{BackendError, BackendKind, CallInfo};
use crate::hashing::sha256_hex;
use crate::imaging::{bounding_box, encode_png, BinaryMask, RasterImage, Rect};
use crate::invocation::Invocation;
use crate::matching::{MatchScore, Route};

/// Content address of an image: SHA-256 of its PNG encoding.
pub fn image_id(image: &RasterImage) -> String {
    sha256_hex(&encode_png(image))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error("session `{0}` not found")]
    SessionNotFound(String),
    #[error("no person image has been provided for this session")]
    NoPersonImage,
    #[error("message text is empty")]
    EmptyMessage,
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::SessionNotFound(_) => "SessionNotFound",
            PipelineError::NoPersonImage => "NoPersonImage",
            PipelineError::EmptyMessage => "EmptyMessage",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ErrorCode {
    ParseFailed,
    RegionNotFound,
    BackendUnavailable,
    BackendTimeout,
    BackendProtocol,
    BackendRejected,
    BackendConfig,
    CatalogError,
    MatchError,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::ParseFailed => "ParseFailed",
            ErrorCode::RegionNotFound => "RegionNotFound",
            ErrorCode::BackendUnavailable => "BackendUnavailable",
            ErrorCode::BackendTimeout => "BackendTimeout",
            ErrorCode::BackendProtocol => "BackendProtocol",
            ErrorCode::BackendRejected => "BackendRejected",
            ErrorCode::BackendConfig => "BackendConfig",
            ErrorCode::CatalogError => "CatalogError",
            ErrorCode::MatchError => "MatchError",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A failed step, attributed to the backend that caused it when known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepError {
    pub code: ErrorCode,
    pub backend: Option<BackendKind>,
    pub message: String,
}

impl StepError {
    pub fn new(code: ErrorCode, backend: Option<BackendKind>, message: impl Into<String>) -> Self {
        Self {
            code,
            backend,
            message: message.into(),
        }
    }
}

impl From<BackendError> for StepError {
    fn from(e: BackendError) -> Self {
        let code = match &e {
            BackendError::Unavailable { .. } => ErrorCode::BackendUnavailable,
            BackendError::Timeout { .. } => ErrorCode::BackendTimeout,
            BackendError::Protocol { .. } => ErrorCode::BackendProtocol,
            BackendError::NoRegionFound => ErrorCode::RegionNotFound,
            BackendError::InvalidInput { .. } => ErrorCode::BackendRejected,
            BackendError::Config { .. } => ErrorCode::BackendConfig,
        };
        StepError::new(code, e.kind(), e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind")]
pub enum Outcome {
    Edited,
    RefusedNotTryOn,
    ErrorWithCode(StepError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MaskSummary {
    pub set_bits: usize,
    pub bbox: Option<Rect>,
}

impl MaskSummary {
    pub fn of(mask: &BinaryMask) -> Self {
        Self {
            set_bits: mask.count(),
            bbox: bounding_box(mask),
        }
    }
}

/// Immutable record of one handled message.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub user_text: String,
    pub raw_llm_response: String,
    /// Whether the first response failed to parse and a repair prompt was sent.
    pub repaired: bool,
    pub invocation: Option<Invocation>,
    /// `None` when the step did not reach routing (not a full outfit change).
    pub route: Option<Route>,
    pub match_score: Option<MatchScore>,
    pub tau: f64,
    pub seed: u64,
    pub mask_summary: Option<MaskSummary>,
    pub backend_calls: Vec<CallInfo>,
    pub input_image_id: Option<String>,
    pub output_image_id: Option<String>,
    pub mask_image_id: Option<String>,
    pub outcome: Outcome,
}

/// Everything returned for one message.
#[derive(Debug, Clone)]
pub struct Turn {
    pub reply: String,
    /// The edited image for `Edited` outcomes.
    pub image: Option<RasterImage>,
    pub mask: Option<BinaryMask>,
    pub trace: TraceStep,
}

#[derive(Debug, Clone)]
pub struct Session {
    session_id: String,
    person_image: Option<RasterImage>,
    current_image: Option<RasterImage>,
    history: Vec<TraceStep>,
    created_at: SystemTime,
    updated_at: SystemTime,
}

impl Session {
    pub fn new(session_id: impl Into<String>) -> Self {
        let now = SystemTime::now();
        Self {
            session_id: session_id.into(),
            person_image: None,
            current_image: None,
            history: Vec::new(),
            created_at: now,
            updated_at: now,
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn person_image(&self) -> Option<&RasterImage> {
        self.person_image.as_ref()
    }

    pub fn current_image(&self) -> Option<&RasterImage> {
        self.current_image.as_ref()
    }

    pub fn history(&self) -> &[TraceStep] {
        &self.history
    }

    pub fn created_at(&self) -> SystemTime {
        self.created_at
    }

    pub fn updated_at(&self) -> SystemTime {
        self.updated_at
    }

    /// Replaces the person photo; the current image restarts from it.
    pub(crate) fn set_person(&mut self, image: RasterImage) {
        self.current_image = Some(image.clone());
        self.person_image = Some(image);
    }

    pub(crate) fn set_current(&mut self, image: RasterImage) {
        self.current_image = Some(image);
    }

    pub(crate) fn append(&mut self, step: TraceStep) {
        self.history.push(step);
        self.updated_at = SystemTime::now();
    }
}

pub type SharedSession = Arc<Mutex<Session>>;

/// Sessions keyed by id. Holding a session's mutex serializes its messages;
/// distinct sessions proceed independently. Ids are sequential so mock runs
/// are reproducible.
#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: Mutex<HashMap<String, SharedSession>>,
    next: AtomicU64,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(&self) -> String {
        let n = self.next.fetch_add(1, Ordering::Relaxed) + 1;
        let id = format!("s{n:06}");
        self.lock()
            .insert(id.clone(), Arc::new(Mutex::new(Session::new(id.clone()))));
        id
    }

    pub fn get(&self, session_id: &str) -> Result<SharedSession, PipelineError> {
        self.lock()
            .get(session_id)
            .cloned()
            .ok_or_else(|| PipelineError::SessionNotFound(session_id.to_owned()))
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.lock().is_empty()
    }

    /// Drops sessions idle for longer than `ttl` and returns them. Sessions
    /// currently processing a message are kept.
    pub fn remove_idle(&self, ttl: Duration, now: SystemTime) -> Vec<Session> {
        let mut map = self.lock();
        let expired: Vec<String> = map
            .iter()
            .filter_map(|(id, s)| {
                let s = s.try_lock().ok()?;
                let idle = now.duration_since(s.updated_at).unwrap_or_default();
                (idle > ttl).then(|| id.clone())
            })
            .collect();
        expired
            .into_iter()
            .filter_map(|id| map.remove(&id))
            .map(|s| s.lock().unwrap_or_else(PoisonError::into_inner).clone())
            .collect()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, SharedSession>> {
        self.sessions.lock().unwrap_or_else(PoisonError::into_inner)
    }
}
