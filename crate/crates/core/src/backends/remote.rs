//! Blocking HTTP client shared by every backend kind.

use std::sync::{Condvar, Mutex, PoisonError};
use std::thread;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::http::Uri;

use super::wire::{self, Envelope};
use super::{
    validate_last_user, BackendConfig, BackendError, BackendKind, BackendMode, BackendResult,
    CallInfo, ChatMessage, ChatModel, EditRequest, Embedder, HumanParser, ImageTryOn,
    PoseEstimator, PromptRefiner, Reply, SegmentationQuery, Segmenter, TextEditor,
};
use crate::imaging::{
    decode_mask_png, decode_parse_map_png, decode_png, BinaryMask, Channels, ParseMap, RasterImage,
};
use crate::matching::{normalize, Embedding};

/// Upper bound on a response body; edited images are the largest payloads.
const MAX_RESPONSE_BYTES: u64 = 64 * 1024 * 1024;
const BACKOFF_BASE_MS: u64 = 50;
const BACKOFF_CAP_MS: u64 = 500;

/// Accepts absolute `http://` URLs (and `https://` when built with TLS) with
/// a host and no query or fragment.
pub fn validate_base_url(url: &str) -> Result<(), String> {
    let uri: Uri = url
        .parse()
        .map_err(|e| format!("invalid endpoint url `{url}`: {e}"))?;
    match uri.scheme_str() {
        Some("http") => {}
        Some("https") if cfg!(feature = "tls") => {}
        Some("https") => return Err("https endpoints need the `tls` feature".into()),
        _ => return Err(format!("endpoint url `{url}` must start with http://")),
    }
    if uri.host().is_none_or(str::is_empty) {
        return Err(format!("endpoint url `{url}` has no host"));
    }
    if uri.query().is_some() || url.contains('#') {
        return Err(format!(
            "endpoint url `{url}` must not carry a query or fragment"
        ));
    }
    Ok(())
}

/// Counting semaphore bounding in-flight requests to one backend.
#[derive(Debug)]
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(PoisonError::into_inner);
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(PoisonError::into_inner);
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(PoisonError::into_inner) += 1;
        self.0.cv.notify_one();
    }
}

enum Failure {
    Retry { timeout: bool, reason: String },
    Fatal(String),
}

/// HTTP client for one backend kind. Implements every backend trait, but only
/// the endpoints matching its configured kind are meaningful.
#[derive(Debug)]
pub struct RemoteBackend {
    config: BackendConfig,
    base: String,
    agent: ureq::Agent,
    limiter: Limiter,
}

impl RemoteBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        if config.mode != BackendMode::Remote {
            return Err(BackendError::Config {
                kind: config.kind,
                reason: "remote client built from a mock config".into(),
            });
        }
        config.validate()?;
        let base = config
            .endpoint_url
            .as_deref()
            .unwrap_or_default()
            .trim_end_matches('/')
            .to_owned();
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            limiter: Limiter::new(config.max_in_flight),
            config,
            base,
            agent,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn kind(&self) -> BackendKind {
        self.config.kind
    }

    fn protocol(&self, reason: impl Into<String>) -> BackendError {
        BackendError::Protocol {
            kind: self.kind(),
            reason: reason.into(),
        }
    }

    fn attempt<Resp: DeserializeOwned>(
        &self,
        url: &str,
        body: &[u8],
    ) -> Result<Envelope<Resp>, Failure> {
        let _permit = self.limiter.acquire();
        let result = self
            .agent
            .post(url)
            .header("content-type", "application/json")
            .send(body);
        let mut response = match result {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => {
                return Err(Failure::Retry {
                    timeout: true,
                    reason: format!("timed out ({t})"),
                })
            }
            Err(
                e
                @ (ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound),
            ) => {
                return Err(Failure::Retry {
                    timeout: false,
                    reason: e.to_string(),
                })
            }
            Err(e) => return Err(Failure::Fatal(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_to_string();
        if status == 429 || status >= 500 {
            return Err(Failure::Retry {
                timeout: false,
                reason: format!("HTTP {status}"),
            });
        }
        if !(200..300).contains(&status) {
            let detail = text.unwrap_or_default();
            return Err(Failure::Fatal(format!("HTTP {status}: {}", detail.trim())));
        }
        let text = text.map_err(|e| match e {
            ureq::Error::Timeout(t) => Failure::Retry {
                timeout: true,
                reason: format!("timed out ({t})"),
            },
            other => Failure::Fatal(format!("reading body: {other}")),
        })?;
        serde_json::from_str(&text).map_err(|e| Failure::Fatal(format!("malformed response: {e}")))
    }

    /// POSTs `request` to `path`, retrying transport failures, 429 and 5xx
    /// up to `retry_count` times.
    fn call<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        request: &Req,
    ) -> BackendResult<Resp> {
        let url = format!("{}{path}", self.base);
        let body = serde_json::to_vec(request).map_err(|e| self.protocol(e.to_string()))?;
        let attempts = self.config.retry_count + 1;
        let started = Instant::now();
        let mut last_timeout = false;
        let mut last_reason = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = (BACKOFF_BASE_MS << (attempt - 1).min(8)).min(BACKOFF_CAP_MS);
                thread::sleep(Duration::from_millis(backoff));
            }
            match self.attempt::<Resp>(&url, &body) {
                Ok(envelope) => {
                    tracing::debug!(kind = %self.kind(), attempt, "backend call succeeded");
                    let info = CallInfo {
                        kind: self.kind(),
                        mode: BackendMode::Remote,
                        model_id: envelope.model_id,
                        latency_ms: started.elapsed().as_millis() as u64,
                    };
                    return Ok(Reply::new(envelope.body, info));
                }
                Err(Failure::Fatal(reason)) => return Err(self.protocol(reason)),
                Err(Failure::Retry { timeout, reason }) => {
                    tracing::warn!(kind = %self.kind(), attempt, %reason, "backend call failed");
                    last_timeout = timeout;
                    last_reason = reason;
                }
            }
        }
        Err(if last_timeout {
            BackendError::Timeout {
                kind: self.kind(),
                attempts,
            }
        } else {
            BackendError::Unavailable {
                kind: self.kind(),
                reason: format!("{last_reason} after {attempts} attempt(s)"),
            }
        })
    }

    fn decode_image(&self, b64: &str) -> Result<RasterImage, BackendError> {
        let bytes = wire::b64_to_bytes(b64).map_err(|e| self.protocol(e))?;
        decode_png(&bytes).map_err(|e| self.protocol(e.to_string()))
    }

    fn expect_dims(&self, got: (u32, u32), want: (u32, u32)) -> Result<(), BackendError> {
        if got == want {
            Ok(())
        } else {
            Err(self.protocol(format!(
                "returned {}x{} for a {}x{} input",
                got.0, got.1, want.0, want.1
            )))
        }
    }

    fn embedding(&self, raw: Vec<f32>) -> Result<Embedding, BackendError> {
        normalize(&raw).map_err(|e| self.protocol(format!("bad embedding: {e}")))
    }
}

impl ChatModel for RemoteBackend {
    fn chat_complete(&self, messages: &[ChatMessage]) -> BackendResult<String> {
        validate_last_user(self.kind(), messages)?;
        let req = wire::ChatRequest {
            messages: messages.to_vec(),
        };
        Ok(self
            .call::<_, wire::ChatResponse>(wire::PATH_CHAT, &req)?
            .map(|r| r.text))
    }
}

impl Embedder for RemoteBackend {
    fn embed_text(&self, text: &str) -> BackendResult<Embedding> {
        let req = wire::EmbedTextRequest {
            text: text.to_owned(),
        };
        let reply = self.call::<_, wire::EmbedResponse>(wire::PATH_EMBED_TEXT, &req)?;
        let embedding = self.embedding(reply.value.embedding)?;
        Ok(Reply::new(embedding, reply.info))
    }

    fn embed_image(&self, image: &RasterImage) -> BackendResult<Embedding> {
        let req = wire::ImageRequest {
            image_png_b64: wire::image_to_b64(image),
        };
        let reply = self.call::<_, wire::EmbedResponse>(wire::PATH_EMBED_IMAGE, &req)?;
        let embedding = self.embedding(reply.value.embedding)?;
        Ok(Reply::new(embedding, reply.info))
    }
}

impl PromptRefiner for RemoteBackend {
    fn refine_prompt(&self, image: &RasterImage, instruction: &str) -> BackendResult<String> {
        let req = wire::InstructionRequest {
            image_png_b64: wire::image_to_b64(image),
            instruction: instruction.to_owned(),
        };
        let reply = self.call::<_, wire::RefineResponse>(wire::PATH_REFINE, &req)?;
        if reply.value.prompt.trim().is_empty() {
            return Err(self.protocol("empty refined prompt"));
        }
        Ok(reply.map(|r| r.prompt))
    }
}

impl Segmenter for RemoteBackend {
    fn segment(&self, query: &SegmentationQuery) -> BackendResult<BinaryMask> {
        let req = wire::InstructionRequest {
            image_png_b64: wire::image_to_b64(query.image()),
            instruction: query.instruction().to_owned(),
        };
        let reply = self.call::<_, wire::SegmentResponse>(wire::PATH_SEGMENT, &req)?;
        let Some(b64) = reply.value.mask_png_b64.as_deref() else {
            return Err(BackendError::NoRegionFound);
        };
        let bytes = wire::b64_to_bytes(b64).map_err(|e| self.protocol(e))?;
        let mask = decode_mask_png(&bytes).map_err(|e| self.protocol(e.to_string()))?;
        self.expect_dims(mask.dims(), query.image().dims())?;
        if mask.is_empty() {
            return Err(BackendError::NoRegionFound);
        }
        Ok(Reply::new(mask, reply.info))
    }
}

impl HumanParser for RemoteBackend {
    fn parse_human(&self, image: &RasterImage) -> BackendResult<ParseMap> {
        let req = wire::ImageRequest {
            image_png_b64: wire::image_to_b64(image),
        };
        let reply = self.call::<_, wire::ParseResponse>(wire::PATH_PARSE, &req)?;
        let bytes =
            wire::b64_to_bytes(&reply.value.parse_map_png_b64).map_err(|e| self.protocol(e))?;
        let parse = decode_parse_map_png(&bytes).map_err(|e| self.protocol(e.to_string()))?;
        self.expect_dims(parse.dims(), image.dims())?;
        Ok(Reply::new(parse, reply.info))
    }
}

impl PoseEstimator for RemoteBackend {
    fn estimate_pose(&self, image: &RasterImage) -> BackendResult<RasterImage> {
        let req = wire::ImageRequest {
            image_png_b64: wire::image_to_b64(image),
        };
        let reply = self.call::<_, wire::ImageResponse>(wire::PATH_POSE, &req)?;
        let pose = self.decode_image(&reply.value.image_png_b64)?.to_rgb();
        self.expect_dims(pose.dims(), image.dims())?;
        Ok(Reply::new(pose, reply.info))
    }
}

impl ImageTryOn for RemoteBackend {
    fn tryon_image_based(
        &self,
        masked_person: &RasterImage,
        garment: &RasterImage,
        seed: u64,
    ) -> BackendResult<RasterImage> {
        let req = wire::TryOnRequest {
            masked_person_png_b64: wire::image_to_b64(masked_person),
            garment_png_b64: wire::image_to_b64(garment),
            seed,
        };
        let reply = self.call::<_, wire::ImageResponse>(wire::PATH_TRYON, &req)?;
        let out = self.decode_image(&reply.value.image_png_b64)?;
        self.expect_dims(out.dims(), masked_person.dims())?;
        Ok(Reply::new(
            match_channels(out, masked_person.channels()),
            reply.info,
        ))
    }
}

impl TextEditor for RemoteBackend {
    fn edit_text_based(&self, request: &EditRequest) -> BackendResult<RasterImage> {
        let req = wire::EditRequestBody {
            mask_png_b64: wire::image_to_b64(&request.mask().to_gray()),
            masked_image_png_b64: wire::image_to_b64(request.masked_image()),
            pose_png_b64: wire::image_to_b64(request.pose_image()),
            guidance_prompt: request.guidance_prompt().to_owned(),
            seed: request.seed(),
        };
        let reply = self.call::<_, wire::ImageResponse>(wire::PATH_EDIT, &req)?;
        let out = self.decode_image(&reply.value.image_png_b64)?;
        self.expect_dims(out.dims(), request.masked_image().dims())?;
        Ok(Reply::new(
            match_channels(out, request.masked_image().channels()),
            reply.info,
        ))
    }
}

/// Generators may answer in RGB for a gray input or vice versa.
fn match_channels(image: RasterImage, want: Channels) -> RasterImage {
    match (image.channels(), want) {
        (a, b) if a == b => image,
        (_, Channels::Rgb) => image.to_rgb(),
        (_, Channels::Gray) => {
            let luma = image.luma();
            RasterImage::from_fn_gray(image.width(), image.height(), |x, y| {
                luma[(y * image.width() + x) as usize]
                    .round()
                    .clamp(0.0, 255.0) as u8
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_url_rules() {
        assert!(validate_base_url("http://127.0.0.1:8080").is_ok());
        assert!(validate_base_url("http://models.internal/api/").is_ok());
        assert!(validate_base_url("ftp://x").is_err());
        assert!(validate_base_url("http://x/?q=1").is_err());
        assert!(validate_base_url("localhost:80").is_err());
        assert!(validate_base_url("").is_err());
    }

    #[test]
    fn mock_config_rejected() {
        assert!(RemoteBackend::new(BackendConfig::mock(BackendKind::Chat)).is_err());
    }

    #[test]
    fn limiter_blocks_at_capacity() {
        let l = Limiter::new(1);
        let p = l.acquire();
        assert_eq!(*l.free.lock().unwrap(), 0);
        drop(p);
        assert_eq!(*l.free.lock().unwrap(), 1);
    }
}
