//! JSON bodies exchanged with remote model servers. Images travel as
//! base64-encoded PNG. Every response carries `model_id` and `latency_ms`
//! next to its payload fields.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::ChatMessage;
use crate::imaging::{encode_png, RasterImage};

pub const PATH_CHAT: &str = "/v1/chat";
pub const PATH_EMBED_TEXT: &str = "/v1/embed/text";
pub const PATH_EMBED_IMAGE: &str = "/v1/embed/image";
pub const PATH_REFINE: &str = "/v1/refine";
pub const PATH_SEGMENT: &str = "/v1/segment";
pub const PATH_PARSE: &str = "/v1/parse";
pub const PATH_POSE: &str = "/v1/pose";
pub const PATH_TRYON: &str = "/v1/tryon";
pub const PATH_EDIT: &str = "/v1/edit";

pub fn image_to_b64(image: &RasterImage) -> String {
    STANDARD.encode(encode_png(image))
}

pub fn b64_to_bytes(text: &str) -> Result<Vec<u8>, String> {
    STANDARD
        .decode(text.trim())
        .map_err(|e| format!("invalid base64: {e}"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope<T> {
    #[serde(flatten)]
    pub body: T,
    pub model_id: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedTextRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRequest {
    pub image_png_b64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstructionRequest {
    pub image_png_b64: String,
    pub instruction: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineResponse {
    pub prompt: String,
}

/// `mask_png_b64` is a single-channel PNG (values ≥ 128 are inside). A
/// missing mask means no region matched.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentResponse {
    #[serde(default)]
    pub mask_png_b64: Option<String>,
}

/// Single-channel PNG whose pixel values are parse-label indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParseResponse {
    pub parse_map_png_b64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageResponse {
    pub image_png_b64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TryOnRequest {
    pub masked_person_png_b64: String,
    pub garment_png_b64: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditRequestBody {
    pub mask_png_b64: String,
    pub masked_image_png_b64: String,
    pub pose_png_b64: String,
    pub guidance_prompt: String,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_flattens_payload() {
        let e = Envelope {
            body: ChatResponse { text: "hi".into() },
            model_id: "m".into(),
            latency_ms: 3,
        };
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, r#"{"text":"hi","model_id":"m","latency_ms":3}"#);
        let back: Envelope<ChatResponse> = serde_json::from_str(&json).unwrap();
        assert_eq!(back.body.text, "hi");
    }

    #[test]
    fn missing_metadata_rejected() {
        assert!(serde_json::from_str::<Envelope<ChatResponse>>(r#"{"text":"hi"}"#).is_err());
    }
}
