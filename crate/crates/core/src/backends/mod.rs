//! Uniform interface to the external models the orchestrator drives.
//!
//! Every model kind has a trait, a deterministic mock in [`mock`] and an
//! HTTP client in [`remote`]. Calls return a [`Reply`] carrying the value and
//! a [`CallInfo`] for the trace. Mocks report zero latency so traces stay
//! byte-stable.

pub mod mock;
pub mod remote;
pub mod wire;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{BinaryMask, ParseMap, RasterImage};
use crate::matching::Embedding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Chat,
    Embed,
    Refine,
    Segment,
    ParseHuman,
    Pose,
    TryonImage,
    EditText,
}

impl BackendKind {
    pub const ALL: [BackendKind; 8] = [
        BackendKind::Chat,
        BackendKind::Embed,
        BackendKind::Refine,
        BackendKind::Segment,
        BackendKind::ParseHuman,
        BackendKind::Pose,
        BackendKind::TryonImage,
        BackendKind::EditText,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Chat => "chat",
            BackendKind::Embed => "embed",
            BackendKind::Refine => "refine",
            BackendKind::Segment => "segment",
            BackendKind::ParseHuman => "parse_human",
            BackendKind::Pose => "pose",
            BackendKind::TryonImage => "tryon_image",
            BackendKind::EditText => "edit_text",
        }
    }

    /// Suffix used in `TF_BACKEND_<KIND>_URL` / `TF_BACKEND_<KIND>_MODE`.
    pub fn env_key(self) -> String {
        self.as_str().to_ascii_uppercase()
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BackendKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown backend kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    Remote,
    #[default]
    Mock,
}

impl FromStr for BackendMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "remote" => Ok(BackendMode::Remote),
            "mock" => Ok(BackendMode::Mock),
            other => Err(format!("unknown backend mode `{other}`")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("{kind} backend unavailable: {reason}")]
    Unavailable { kind: BackendKind, reason: String },
    #[error("{kind} backend timed out after {attempts} attempt(s)")]
    Timeout { kind: BackendKind, attempts: u32 },
    #[error("{kind} backend protocol error: {reason}")]
    Protocol { kind: BackendKind, reason: String },
    #[error("no editable region found for the instruction")]
    NoRegionFound,
    #[error("{kind} backend rejected input: {reason}")]
    InvalidInput { kind: BackendKind, reason: String },
    #[error("invalid {kind} backend configuration: {reason}")]
    Config { kind: BackendKind, reason: String },
}

impl BackendError {
    pub fn kind(&self) -> Option<BackendKind> {
        match self {
            BackendError::Unavailable { kind, .. }
            | BackendError::Timeout { kind, .. }
            | BackendError::Protocol { kind, .. }
            | BackendError::InvalidInput { kind, .. }
            | BackendError::Config { kind, .. } => Some(*kind),
            BackendError::NoRegionFound => Some(BackendKind::Segment),
        }
    }

    pub(crate) fn invalid(kind: BackendKind, reason: impl Into<String>) -> Self {
        BackendError::InvalidInput {
            kind,
            reason: reason.into(),
        }
    }
}

/// Per-call metadata recorded in the trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallInfo {
    pub kind: BackendKind,
    pub mode: BackendMode,
    pub model_id: String,
    pub latency_ms: u64,
}

impl CallInfo {
    pub fn mock(kind: BackendKind) -> Self {
        Self {
            kind,
            mode: BackendMode::Mock,
            model_id: format!("mock-{}", kind.as_str()),
            latency_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply<T> {
    pub value: T,
    pub info: CallInfo,
}

impl<T> Reply<T> {
    pub fn new(value: T, info: CallInfo) -> Self {
        Self { value, info }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Reply<U> {
        Reply {
            value: f(self.value),
            info: self.info,
        }
    }
}

pub type BackendResult<T> = Result<Reply<T>, BackendError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Image plus instruction for the text-prompted segmenter.
#[derive(Debug, Clone)]
pub struct SegmentationQuery {
    image: RasterImage,
    instruction: String,
}

impl SegmentationQuery {
    pub fn new(image: RasterImage, instruction: impl Into<String>) -> Result<Self, BackendError> {
        let instruction = instruction.into();
        if instruction.trim().is_empty() {
            return Err(BackendError::invalid(
                BackendKind::Segment,
                "instruction is empty",
            ));
        }
        Ok(Self { image, instruction })
    }

    pub fn image(&self) -> &RasterImage {
        &self.image
    }

    pub fn instruction(&self) -> &str {
        &self.instruction
    }
}

/// Conditioning bundle for the text-guided editor: region mask, masked
/// person, dense-pose rendering and the refined guidance prompt. Noise is
/// derived generator-side from `seed`.
#[derive(Debug, Clone)]
pub struct EditRequest {
    mask: BinaryMask,
    masked_image: RasterImage,
    pose_image: RasterImage,
    guidance_prompt: String,
    seed: u64,
}

impl EditRequest {
    pub fn new(
        mask: BinaryMask,
        masked_image: RasterImage,
        pose_image: RasterImage,
        guidance_prompt: impl Into<String>,
        seed: u64,
    ) -> Result<Self, BackendError> {
        let guidance_prompt = guidance_prompt.into();
        if guidance_prompt.trim().is_empty() {
            return Err(BackendError::invalid(
                BackendKind::EditText,
                "guidance prompt is empty",
            ));
        }
        if mask.dims() != masked_image.dims() || pose_image.dims() != masked_image.dims() {
            return Err(BackendError::invalid(
                BackendKind::EditText,
                "mask, masked image and pose image must share dimensions",
            ));
        }
        Ok(Self {
            mask,
            masked_image,
            pose_image,
            guidance_prompt,
            seed,
        })
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn masked_image(&self) -> &RasterImage {
        &self.masked_image
    }

    pub fn pose_image(&self) -> &RasterImage {
        &self.pose_image
    }

    pub fn guidance_prompt(&self) -> &str {
        &self.guidance_prompt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

pub trait ChatModel: Send + Sync {
    /// The last message must have role `user`.
    fn chat_complete(&self, messages: &[ChatMessage]) -> BackendResult<String>;
}

pub trait Embedder: Send + Sync {
    fn embed_text(&self, text: &str) -> BackendResult<Embedding>;
    fn embed_image(&self, image: &RasterImage) -> BackendResult<Embedding>;
}

pub trait PromptRefiner: Send + Sync {
    fn refine_prompt(&self, image: &RasterImage, instruction: &str) -> BackendResult<String>;
}

pub trait Segmenter: Send + Sync {
    /// Fails with [`BackendError::NoRegionFound`] rather than returning an
    /// empty mask.
    fn segment(&self, query: &SegmentationQuery) -> BackendResult<BinaryMask>;
}

pub trait HumanParser: Send + Sync {
    fn parse_human(&self, image: &RasterImage) -> BackendResult<ParseMap>;
}

pub trait PoseEstimator: Send + Sync {
    /// Three-channel rendering at the input's dimensions.
    fn estimate_pose(&self, image: &RasterImage) -> BackendResult<RasterImage>;
}

pub trait ImageTryOn: Send + Sync {
    fn tryon_image_based(
        &self,
        masked_person: &RasterImage,
        garment: &RasterImage,
        seed: u64,
    ) -> BackendResult<RasterImage>;
}

pub trait TextEditor: Send + Sync {
    fn edit_text_based(&self, request: &EditRequest) -> BackendResult<RasterImage>;
}

pub(crate) fn validate_last_user(
    kind: BackendKind,
    messages: &[ChatMessage],
) -> Result<(), BackendError> {
    match messages.last() {
        Some(m) if m.role == Role::User => Ok(()),
        _ => Err(BackendError::invalid(
            kind,
            "last message must have role user",
        )),
    }
}

/// Connection settings for one backend kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub mode: BackendMode,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default = "BackendConfig::default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "BackendConfig::default_retry_count")]
    pub retry_count: u32,
    #[serde(default = "BackendConfig::default_max_in_flight")]
    pub max_in_flight: usize,
}

impl BackendConfig {
    fn default_timeout_ms() -> u64 {
        30_000
    }

    fn default_retry_count() -> u32 {
        2
    }

    fn default_max_in_flight() -> usize {
        4
    }

    pub fn mock(kind: BackendKind) -> Self {
        Self {
            kind,
            mode: BackendMode::Mock,
            endpoint_url: None,
            timeout_ms: Self::default_timeout_ms(),
            retry_count: Self::default_retry_count(),
            max_in_flight: Self::default_max_in_flight(),
        }
    }

    pub fn remote(kind: BackendKind, endpoint_url: impl Into<String>) -> Self {
        Self {
            mode: BackendMode::Remote,
            endpoint_url: Some(endpoint_url.into()),
            ..Self::mock(kind)
        }
    }

    /// Applies `TF_BACKEND_<KIND>_URL` and `TF_BACKEND_<KIND>_MODE` from
    /// `lookup`. A URL without an explicit mode switches to remote.
    pub fn with_env(
        mut self,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, BackendError> {
        let key = self.kind.env_key();
        let url = lookup(&format!("TF_BACKEND_{key}_URL"));
        let mode = lookup(&format!("TF_BACKEND_{key}_MODE"));
        if let Some(url) = url {
            self.endpoint_url = Some(url);
            self.mode = BackendMode::Remote;
        }
        if let Some(mode) = mode {
            self.mode = mode.parse().map_err(|reason| BackendError::Config {
                kind: self.kind,
                reason,
            })?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let fail = |reason: &str| BackendError::Config {
            kind: self.kind,
            reason: reason.to_owned(),
        };
        if self.timeout_ms == 0 {
            return Err(fail("timeout_ms must be positive"));
        }
        if self.max_in_flight == 0 {
            return Err(fail("max_in_flight must be positive"));
        }
        if self.mode == BackendMode::Remote {
            let url = self
                .endpoint_url
                .as_deref()
                .ok_or_else(|| fail("remote mode requires endpoint_url"))?;
            remote::validate_base_url(url).map_err(|e| fail(&e))?;
        }
        Ok(())
    }
}

/// One handle per model kind. Cheap to clone.
#[derive(Clone)]
pub struct Backends {
    pub chat: Arc<dyn ChatModel>,
    pub embed: Arc<dyn Embedder>,
    pub refine: Arc<dyn PromptRefiner>,
    pub segment: Arc<dyn Segmenter>,
    pub parse_human: Arc<dyn HumanParser>,
    pub pose: Arc<dyn PoseEstimator>,
    pub tryon: Arc<dyn ImageTryOn>,
    pub edit: Arc<dyn TextEditor>,
}

impl fmt::Debug for Backends {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backends").finish_non_exhaustive()
    }
}

impl Backends {
    /// Every kind backed by its deterministic mock, with the shipped
    /// fixtures registered.
    pub fn mock() -> Self {
        let parser = Arc::new(mock::MockHumanParser::with_fixture());
        Self {
            chat: Arc::new(mock::MockChat),
            embed: Arc::new(mock::MockEmbedder::with_fixture_tags()),
            refine: Arc::new(mock::MockRefiner),
            segment: Arc::new(mock::MockSegmenter::new(parser.clone())),
            parse_human: parser.clone(),
            pose: Arc::new(mock::MockPoseEstimator::new(parser)),
            tryon: Arc::new(mock::MockTryOn::default()),
            edit: Arc::new(mock::MockEditor),
        }
    }

    /// Builds each kind from its config: mocks where `mode = mock`, HTTP
    /// clients otherwise.
    pub fn from_configs(configs: &[BackendConfig]) -> Result<Self, BackendError> {
        let mut backends = Self::mock();
        for config in configs {
            config.validate()?;
            if config.mode == BackendMode::Mock {
                continue;
            }
            let client = Arc::new(remote::RemoteBackend::new(config.clone())?);
            match config.kind {
                BackendKind::Chat => backends.chat = client,
                BackendKind::Embed => backends.embed = client,
                BackendKind::Refine => backends.refine = client,
                BackendKind::Segment => backends.segment = client,
                BackendKind::ParseHuman => backends.parse_human = client,
                BackendKind::Pose => backends.pose = client,
                BackendKind::TryonImage => backends.tryon = client,
                BackendKind::EditText => backends.edit = client,
            }
        }
        Ok(backends)
    }
}
