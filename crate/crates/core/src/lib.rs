//! Orchestration engine for instruction-driven virtual try-on.
//!
//! A chat model turns a free-form request into a structured [`Invocation`];
//! the [`pipeline`] then masks the affected region, matches the request
//! against the garment [`catalog`] and drives an image generator, with every
//! model behind the [`backends`] traits (remote HTTP or deterministic mock).

pub mod backends;
pub mod catalog;
pub mod fixtures;
pub mod hashing;
pub mod imaging;
pub mod invocation;
pub mod matching;
pub mod parser;
pub mod pipeline;
pub mod prompt;

pub use backends::{BackendConfig, BackendError, BackendKind, BackendMode, Backends, CallInfo};
pub use catalog::{Catalog, CatalogError, CatalogSnapshot, Category, GarmentRecord};
pub use imaging::{BinaryMask, ImagingError, Label, ParseMap, RasterImage, Rect};
pub use invocation::{FunctionKind, Invocation, ItemKind};
pub use matching::{best_match, Branch, Embedding, MatchError, MatchScore, Route, Threshold};
pub use parser::{parse_invocation, parse_response, Decision, ParseError};
pub use pipeline::{
    ErrorCode, Orchestrator, Outcome, PipelineConfig, PipelineError, Session, SessionStore,
    TraceStep, Turn,
};
pub use prompt::{render_prompt, PromptError, PromptTemplate};
