use std::sync::{Arc, PoisonError, RwLock};

use super::{
    image_id, ErrorCode, MaskSummary, Outcome, PipelineError, Session, StepError, TraceStep, Turn,
};
use crate::backends::{
    BackendKind, Backends, CallInfo, ChatMessage, EditRequest, Reply, SegmentationQuery,
};
use crate::catalog::CatalogSnapshot;
use crate::hashing::step_seed;
use crate::imaging::{
    apply_mask_with_fill, composite, dilate, mask_from_item, BinaryMask, RasterImage, DEFAULT_FILL,
};
use crate::invocation::{FunctionKind, Invocation};
use crate::matching::{best_match, MatchError, Route, Threshold};
use crate::parser::{parse_response, Decision};
use crate::prompt::{PromptTemplate, INSTRUCTION_CLOSE, INSTRUCTION_OPEN};

const DEFAULT_EDITED_REPLY: &str = "Here is your updated look.";
const DEFAULT_REFUSAL: &str =
    "I can only help with outfits: ask me to change a garment or adjust a detail.";
const PARSE_FAILED_REPLY: &str =
    "Sorry, I couldn't work out what to change. Could you rephrase your request?";
const REGION_NOT_FOUND_REPLY: &str =
    "I couldn't find that part of the outfit in the photo. Could you rephrase which part to change?";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub tau: Threshold,
    /// Previous user/assistant exchanges sent along with the prompt.
    pub history_depth: usize,
    /// Square dilation applied to every edit mask; 0 disables it.
    pub dilation_radius: u32,
    pub fill: u8,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: Threshold::new(Threshold::DEFAULT_MOCK).expect("default threshold in range"),
            history_depth: 4,
            dilation_radius: 0,
            fill: DEFAULT_FILL,
        }
    }
}

/// Inputs fixed for the duration of one step.
#[derive(Debug, Clone)]
pub struct StepContext {
    pub tau: Threshold,
    pub seed: u64,
    pub catalog: Arc<CatalogSnapshot>,
}

/// What a step did before it succeeded or failed.
#[derive(Debug, Clone, Default)]
pub struct StepLog {
    pub route: Option<Route>,
    pub mask_summary: Option<MaskSummary>,
    pub calls: Vec<CallInfo>,
}

impl StepLog {
    fn record<T>(&mut self, reply: Reply<T>) -> T {
        self.calls.push(reply.info);
        reply.value
    }
}

/// Result of a successful edit: the post-composited image and its mask.
#[derive(Debug, Clone)]
pub struct Edit {
    pub image: RasterImage,
    pub mask: BinaryMask,
}

/// Drives one message through prompt, model call, parsing, masking,
/// matching and generation.
pub struct Orchestrator {
    template: PromptTemplate,
    backends: Backends,
    config: PipelineConfig,
    tau: RwLock<Threshold>,
    catalog: RwLock<Arc<CatalogSnapshot>>,
}

impl std::fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Orchestrator")
            .field("config", &self.config)
            .field("tau", &self.tau())
            .finish_non_exhaustive()
    }
}

impl Orchestrator {
    pub fn new(
        template: PromptTemplate,
        backends: Backends,
        catalog: CatalogSnapshot,
        config: PipelineConfig,
    ) -> Self {
        Self {
            template,
            backends,
            tau: RwLock::new(config.tau),
            catalog: RwLock::new(Arc::new(catalog)),
            config,
        }
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    pub fn tau(&self) -> Threshold {
        *self.tau.read().unwrap_or_else(PoisonError::into_inner)
    }

    /// Affects steps that start after the call.
    pub fn set_tau(&self, tau: Threshold) {
        *self.tau.write().unwrap_or_else(PoisonError::into_inner) = tau;
    }

    pub fn catalog(&self) -> Arc<CatalogSnapshot> {
        self.catalog
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .clone()
    }

    /// Atomically replaces the catalog; in-flight steps keep the old one.
    pub fn swap_catalog(&self, catalog: CatalogSnapshot) -> Arc<CatalogSnapshot> {
        let new = Arc::new(catalog);
        let mut slot = self.catalog.write().unwrap_or_else(PoisonError::into_inner);
        std::mem::replace(&mut *slot, new)
    }

    fn instruction_block(text: &str) -> String {
        format!("{INSTRUCTION_OPEN}\n{text}\n{INSTRUCTION_CLOSE}")
    }

    fn conversation(&self, session: &Session, prompt: &str) -> Vec<ChatMessage> {
        let past = session.history();
        let start = past.len().saturating_sub(self.config.history_depth);
        let mut messages = Vec::new();
        for step in &past[start..] {
            if step.raw_llm_response.is_empty() {
                continue;
            }
            messages.push(ChatMessage::user(Self::instruction_block(&step.user_text)));
            messages.push(ChatMessage::assistant(step.raw_llm_response.clone()));
        }
        messages.push(ChatMessage::user(prompt));
        messages
    }

    /// Handles one user message. `image`, when given, replaces the person
    /// photo; it is committed only if the step does not fail. `seed`
    /// overrides the per-step default.
    pub fn handle_message(
        &self,
        session: &mut Session,
        user_text: &str,
        image: Option<RasterImage>,
        seed: Option<u64>,
    ) -> Result<Turn, PipelineError> {
        if user_text.trim().is_empty() {
            return Err(PipelineError::EmptyMessage);
        }
        let step = session.history().len();
        let image = image.map(|i| i.to_rgb());
        let ctx = StepContext {
            tau: self.tau(),
            seed: seed.unwrap_or_else(|| step_seed(session.session_id(), step)),
            catalog: self.catalog(),
        };
        let mut log = StepLog::default();
        let mut trace = TraceStep {
            step,
            user_text: user_text.to_owned(),
            raw_llm_response: String::new(),
            repaired: false,
            invocation: None,
            route: None,
            match_score: None,
            tau: ctx.tau.value(),
            seed: ctx.seed,
            mask_summary: None,
            backend_calls: Vec::new(),
            input_image_id: None,
            output_image_id: None,
            mask_image_id: None,
            outcome: Outcome::Edited,
        };

        let decision = self.decide(session, user_text, &mut trace, &mut log);
        let invocation = match decision {
            Err(error) => {
                let reply = failure_reply(&error);
                return Ok(self.finish(
                    session,
                    trace,
                    log,
                    reply,
                    Outcome::ErrorWithCode(error),
                    None,
                ));
            }
            Ok(Decision::Decline { reply }) => {
                if let Some(img) = image {
                    session.set_person(img);
                }
                let reply = if reply.trim().is_empty() {
                    DEFAULT_REFUSAL.to_owned()
                } else {
                    reply
                };
                return Ok(self.finish(session, trace, log, reply, Outcome::RefusedNotTryOn, None));
            }
            Ok(Decision::Invoke(inv)) => inv,
        };
        trace.invocation = Some(invocation.clone());

        let Some(input) = image.clone().or_else(|| session.current_image().cloned()) else {
            return Err(PipelineError::NoPersonImage);
        };
        trace.input_image_id = Some(image_id(&input));

        let result = match invocation.function() {
            FunctionKind::FullOutfitChange => {
                self.run_full_outfit_change(&ctx, &input, &invocation, &mut log)
            }
            FunctionKind::LocalizedEditing => {
                self.run_localized_edit(&ctx, &input, &invocation, &mut log)
            }
        };
        match result {
            Ok(edit) => {
                if let Some(img) = image {
                    session.set_person(img);
                }
                session.set_current(edit.image.clone());
                let reply = if invocation.reply().trim().is_empty() {
                    DEFAULT_EDITED_REPLY.to_owned()
                } else {
                    invocation.reply().to_owned()
                };
                Ok(self.finish(session, trace, log, reply, Outcome::Edited, Some(edit)))
            }
            Err(error) => {
                let reply = failure_reply(&error);
                Ok(self.finish(
                    session,
                    trace,
                    log,
                    reply,
                    Outcome::ErrorWithCode(error),
                    None,
                ))
            }
        }
    }

    /// Model call plus parsing, with one repair attempt on parse failure.
    fn decide(
        &self,
        session: &Session,
        user_text: &str,
        trace: &mut TraceStep,
        log: &mut StepLog,
    ) -> Result<Decision, StepError> {
        let prompt = self
            .template
            .render(user_text)
            .map_err(|e| StepError::new(ErrorCode::ParseFailed, None, e.to_string()))?;
        let mut messages = self.conversation(session, &prompt);
        let raw = log.record(self.backends.chat.chat_complete(&messages)?);
        trace.raw_llm_response = raw.clone();
        let first_error = match parse_response(&raw) {
            Ok(d) => return Ok(d),
            Err(e) => e,
        };

        tracing::debug!(error = %first_error, "model response did not parse, sending repair prompt");
        trace.repaired = true;
        messages.push(ChatMessage::assistant(raw));
        messages.push(ChatMessage::user(format!(
            "{prompt}\nYour previous answer could not be parsed: {first_error}. \
             Answer again with exactly one JSON object in the required format."
        )));
        let raw = log.record(self.backends.chat.chat_complete(&messages)?);
        trace.raw_llm_response = raw.clone();
        parse_response(&raw).map_err(|e| {
            StepError::new(
                ErrorCode::ParseFailed,
                Some(BackendKind::Chat),
                format!("response unparseable after repair: {e}"),
            )
        })
    }

    fn finish(
        &self,
        session: &mut Session,
        mut trace: TraceStep,
        log: StepLog,
        reply: String,
        outcome: Outcome,
        edit: Option<Edit>,
    ) -> Turn {
        trace.match_score = log.route.as_ref().and_then(Route::score);
        trace.route = log.route;
        trace.mask_summary = log.mask_summary;
        trace.backend_calls = log.calls;
        trace.outcome = outcome;
        if let Some(edit) = &edit {
            trace.output_image_id = Some(image_id(&edit.image));
            trace.mask_image_id = Some(image_id(&edit.mask.to_gray()));
        }
        session.append(trace.clone());
        let (image, mask) = match edit {
            Some(e) => (Some(e.image), Some(e.mask)),
            None => (None, None),
        };
        Turn {
            reply,
            image,
            mask,
            trace,
        }
    }

    fn prepare_mask(&self, mask: BinaryMask, log: &mut StepLog) -> BinaryMask {
        let mask = if self.config.dilation_radius > 0 {
            dilate(&mask, self.config.dilation_radius)
        } else {
            mask
        };
        log.mask_summary = Some(MaskSummary::of(&mask));
        mask
    }

    /// Whole-garment replacement: mask the item region, match the
    /// description against the catalog and generate with the matched garment
    /// (score ≥ τ) or from text.
    pub fn run_full_outfit_change(
        &self,
        ctx: &StepContext,
        image: &RasterImage,
        inv: &Invocation,
        log: &mut StepLog,
    ) -> Result<Edit, StepError> {
        let b = &self.backends;
        let parse = log.record(b.parse_human.parse_human(image)?);
        if parse.dims() != image.dims() {
            return Err(StepError::new(
                ErrorCode::BackendProtocol,
                Some(BackendKind::ParseHuman),
                "parse map dimensions differ from the image",
            ));
        }
        let mask = mask_from_item(&parse, inv.item())
            .map_err(|e| StepError::new(ErrorCode::RegionNotFound, None, e.to_string()))?;
        let mask = self.prepare_mask(mask, log);
        if mask.is_empty() {
            return Err(StepError::new(
                ErrorCode::RegionNotFound,
                Some(BackendKind::ParseHuman),
                format!("no {} region in the photo", inv.item()),
            ));
        }
        let masked =
            apply_mask_with_fill(image, &mask, self.config.fill).expect("mask matches image");

        let catalog = ctx.catalog.catalog();
        let best = if catalog.is_empty() {
            None
        } else {
            let query = log.record(b.embed.embed_text(inv.details())?);
            match best_match(&query, catalog, inv.item()) {
                Ok(m) => Some(m),
                Err(MatchError::EmptyCatalog) => None,
                Err(e) => {
                    return Err(StepError::new(
                        ErrorCode::MatchError,
                        Some(BackendKind::Embed),
                        e.to_string(),
                    ))
                }
            }
        };
        let route = Route::decide(best, ctx.tau);
        log.route = Some(route.clone());

        let output = match &route {
            Route::ImageBased { garment_id, .. } => {
                let garment = ctx
                    .catalog
                    .garment_image(garment_id)
                    .map_err(|e| StepError::new(ErrorCode::CatalogError, None, e.to_string()))?;
                log.record(b.tryon.tryon_image_based(&masked, &garment, ctx.seed)?)
            }
            Route::TextBased { .. } => {
                let prompt = log.record(b.refine.refine_prompt(image, inv.details())?);
                let pose = log.record(b.pose.estimate_pose(image)?);
                let request = EditRequest::new(mask.clone(), masked, pose, prompt, ctx.seed)?;
                log.record(b.edit.edit_text_based(&request)?)
            }
        };
        let generator = match route {
            Route::ImageBased { .. } => BackendKind::TryonImage,
            Route::TextBased { .. } => BackendKind::EditText,
        };
        post_composite(image, &output, mask, generator)
    }

    /// Part-level edit: segment the region named in the description and
    /// regenerate only that region from the refined prompt and pose.
    pub fn run_localized_edit(
        &self,
        ctx: &StepContext,
        image: &RasterImage,
        inv: &Invocation,
        log: &mut StepLog,
    ) -> Result<Edit, StepError> {
        let b = &self.backends;
        let query = SegmentationQuery::new(image.clone(), inv.details())?;
        let mask = log.record(b.segment.segment(&query)?);
        if mask.dims() != image.dims() {
            return Err(StepError::new(
                ErrorCode::BackendProtocol,
                Some(BackendKind::Segment),
                "mask dimensions differ from the image",
            ));
        }
        let mask = self.prepare_mask(mask, log);
        if mask.is_empty() {
            return Err(StepError::from(
                crate::backends::BackendError::NoRegionFound,
            ));
        }
        let prompt = log.record(b.refine.refine_prompt(image, inv.details())?);
        let pose = log.record(b.pose.estimate_pose(image)?);
        let masked =
            apply_mask_with_fill(image, &mask, self.config.fill).expect("mask matches image");
        let request = EditRequest::new(mask.clone(), masked, pose, prompt, ctx.seed)?;
        let output = log.record(b.edit.edit_text_based(&request)?);
        post_composite(image, &output, mask, BackendKind::EditText)
    }
}

/// Keeps the generator's pixels only inside `mask`, whatever it returned
/// elsewhere.
fn post_composite(
    original: &RasterImage,
    generated: &RasterImage,
    mask: BinaryMask,
    generator: BackendKind,
) -> Result<Edit, StepError> {
    let generated = if generated.channels() == original.channels() {
        generated.clone()
    } else {
        generated.to_rgb()
    };
    let image = composite(original, &generated, &mask).map_err(|e| {
        StepError::new(
            ErrorCode::BackendProtocol,
            Some(generator),
            format!("generator output: {e}"),
        )
    })?;
    Ok(Edit { image, mask })
}

fn failure_reply(error: &StepError) -> String {
    match error.code {
        ErrorCode::ParseFailed => PARSE_FAILED_REPLY.to_owned(),
        ErrorCode::RegionNotFound => REGION_NOT_FOUND_REPLY.to_owned(),
        _ => match error.backend {
            Some(kind) => format!(
                "Sorry, the {kind} service is not available right now. Please try again shortly."
            ),
            None => "Sorry, something went wrong while editing. Please try again.".to_owned(),
        },
    }
}
