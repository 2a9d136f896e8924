//! Deterministic stand-ins for every model kind.
//!
//! Each mock is a pure function of its inputs (and seed). They are tuned so
//! that the shipped fixtures exercise every pipeline path: both routing
//! branches, localized edits, refusals and the no-region failure.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex, PoisonError, RwLock};

use serde::Serialize;

use super::{
    validate_last_user, BackendError, BackendKind, BackendResult, CallInfo, ChatMessage, ChatModel,
    EditRequest, Embedder, HumanParser, ImageTryOn, PoseEstimator, PromptRefiner, Reply,
    SegmentationQuery, Segmenter, TextEditor,
};
use crate::fixtures::{self, BodyLayout};
use crate::hashing::{fnv1a64, image_digest, splitmix64};
use crate::imaging::{
    bounding_box, resize_nearest, BinaryMask, Channels, Label, ParseMap, RasterImage, DEFAULT_FILL,
};
use crate::invocation::{FunctionKind, Invocation, ItemKind};
use crate::matching::{normalize, Embedding};
use crate::parser::DECLINE_FUNCTION;
use crate::prompt::extract_instruction;

fn reply<T>(kind: BackendKind, value: T) -> BackendResult<T> {
    Ok(Reply::new(value, CallInfo::mock(kind)))
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\''))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

const UPPER_NOUNS: &[&str] = &[
    "top", "tops", "shirt", "shirts", "t-shirt", "tee", "blouse", "sweater", "jumper", "jacket",
    "hoodie", "coat", "cardigan", "tank", "polo",
];
const LOWER_NOUNS: &[&str] = &[
    "pants", "trousers", "jeans", "skirt", "shorts", "chinos", "leggings", "slacks",
];
const FULL_NOUNS: &[&str] = &["dress", "gown", "jumpsuit", "outfit", "romper", "overalls"];

const LOCAL_KEYWORDS: &[&str] = &[
    "sleeve", "sleeves", "collar", "collars", "neckline", "neck", "v-neck", "hem", "hemline",
    "cuff", "cuffs", "pocket", "pockets", "button", "buttons", "logo", "zipper",
];

const OUTFIT_CUES: &[&str] = &[
    "change into",
    "change to",
    "change my",
    "switch to",
    "swap",
    "wear",
    "try on",
    "put on",
    "dress me",
    "replace",
    "instead",
];

/// Leading words dropped when extracting garment details.
const LEAD_WORDS: &[&str] = &[
    "i", "i'd", "id", "want", "would", "like", "to", "please", "can", "you", "change", "into",
    "switch", "swap", "put", "on", "wear", "try", "dress", "me", "in", "a", "an", "the", "my",
    "some", "let", "see", "how", "about", "show", "for", "with", "replace", "it",
];

fn garment_item(tokens: &[String]) -> Option<ItemKind> {
    tokens.iter().rev().find_map(|t| {
        let t = t.as_str();
        if UPPER_NOUNS.contains(&t) {
            Some(ItemKind::UpperBody)
        } else if LOWER_NOUNS.contains(&t) {
            Some(ItemKind::LowerBody)
        } else if FULL_NOUNS.contains(&t) {
            Some(ItemKind::FullBody)
        } else {
            None
        }
    })
}

fn garment_details(tokens: &[String], fallback: &str) -> String {
    let start = tokens
        .iter()
        .position(|t| !LEAD_WORDS.contains(&t.as_str()))
        .unwrap_or(tokens.len());
    let details = tokens[start..].join(" ");
    if details.is_empty() {
        fallback.trim().to_owned()
    } else {
        details
    }
}

#[derive(Serialize)]
struct DeclineBody<'a> {
    function: &'a str,
    item: &'a str,
    details: &'a str,
    reply: &'a str,
}

/// Keyword-rule chat model. The instruction is taken from the sentinel block
/// of the last user message (or the whole message if there is none).
///
/// Rules, first match wins: a garment noun plus an outfit cue ("change
/// into", "wear", ...) is a full outfit change; any part keyword (sleeve,
/// collar, hem, ...) is a localized edit; a bare garment noun is a full
/// outfit change; anything else declines. The item is decided by the last
/// garment noun.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockChat;

impl MockChat {
    pub fn respond(instruction: &str) -> String {
        let lower = instruction.to_lowercase();
        let tokens = words(&lower);
        let item = garment_item(&tokens);
        let has_cue = OUTFIT_CUES.iter().any(|c| lower.contains(c));
        let has_local = tokens.iter().any(|t| LOCAL_KEYWORDS.contains(&t.as_str()));

        let invocation = match item {
            Some(item) if has_cue || !has_local => {
                let details = garment_details(&tokens, instruction);
                let reply = format!("Sure, here is the {details} for you.");
                Invocation::new(FunctionKind::FullOutfitChange, item, details, reply)
            }
            _ if has_local => Invocation::new(
                FunctionKind::LocalizedEditing,
                ItemKind::Unspecified,
                instruction.trim(),
                "Okay, editing that detail for you.",
            ),
            _ => {
                let body = DeclineBody {
                    function: DECLINE_FUNCTION,
                    item: ItemKind::Unspecified.as_str(),
                    details: "",
                    reply: "I can only help with outfits: ask me to change a garment or adjust a detail.",
                };
                return serde_json::to_string(&body).expect("decline body serializes");
            }
        };
        invocation
            .expect("mock rules only build valid invocations")
            .to_canonical_json()
    }
}

impl ChatModel for MockChat {
    fn chat_complete(&self, messages: &[ChatMessage]) -> BackendResult<String> {
        validate_last_user(BackendKind::Chat, messages)?;
        let last = &messages[messages.len() - 1].content;
        let instruction = extract_instruction(last).unwrap_or(last);
        reply(BackendKind::Chat, Self::respond(instruction))
    }
}

/// Replays canned responses in order and records every request. Fails with
/// `Unavailable` once the script is exhausted.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    script: Mutex<VecDeque<String>>,
    requests: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedChat {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: Mutex::new(responses.into_iter().map(Into::into).collect()),
            requests: Mutex::default(),
        }
    }

    pub fn requests(&self) -> Vec<Vec<ChatMessage>> {
        self.requests
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .clone()
    }
}

impl ChatModel for ScriptedChat {
    fn chat_complete(&self, messages: &[ChatMessage]) -> BackendResult<String> {
        validate_last_user(BackendKind::Chat, messages)?;
        self.requests
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .push(messages.to_vec());
        let next = self
            .script
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .pop_front();
        match next {
            Some(text) => reply(BackendKind::Chat, text),
            None => Err(BackendError::Unavailable {
                kind: BackendKind::Chat,
                reason: "script exhausted".into(),
            }),
        }
    }
}

pub const MOCK_EMBED_DIM: usize = 64;

/// Weight of the colour signature relative to the caption tags in an image
/// embedding.
const PALETTE_WEIGHT: f32 = 0.5;

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "into", "change", "put", "on", "in", "with", "my", "me", "of", "and", "to",
    "for", "some", "please", "i", "want", "wear", "try", "it", "make",
];

const PALETTE: &[(&str, [u8; 3])] = &[
    ("red", [200, 30, 40]),
    ("orange", [235, 130, 40]),
    ("yellow", [235, 205, 50]),
    ("green", [40, 140, 60]),
    ("blue", [60, 100, 210]),
    ("navy", [35, 45, 100]),
    ("purple", [120, 60, 160]),
    ("pink", [235, 150, 180]),
    ("brown", [110, 70, 40]),
    ("black", [20, 20, 24]),
    ("white", [245, 245, 245]),
    ("gray", [128, 128, 128]),
    ("khaki", [190, 168, 118]),
];

fn bucket(token: &str) -> usize {
    (fnv1a64(token.as_bytes()) % MOCK_EMBED_DIM as u64) as usize
}

fn singular(token: &str) -> &str {
    if token.len() > 3 && token.ends_with('s') && !token.ends_with("ss") {
        &token[..token.len() - 1]
    } else {
        token
    }
}

fn text_counts(text: &str) -> Vec<f32> {
    let mut v = vec![0.0f32; MOCK_EMBED_DIM];
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.len() >= 2 && !STOPWORDS.contains(t))
        .map(singular)
        .collect();
    if tokens.is_empty() {
        v[bucket(lower.trim())] = 1.0;
    }
    for t in tokens {
        v[bucket(t)] += 1.0;
    }
    v
}

fn palette_counts(image: &RasterImage) -> Vec<f32> {
    let rgb = image.to_rgb();
    let mut hist = [0u32; PALETTE.len()];
    for px in rgb.as_bytes().chunks_exact(3) {
        let nearest = PALETTE
            .iter()
            .enumerate()
            .min_by_key(|(_, (_, c))| {
                (0..3)
                    .map(|i| (i32::from(px[i]) - i32::from(c[i])).pow(2))
                    .sum::<i32>()
            })
            .map(|(i, _)| i)
            .expect("palette is non-empty");
        hist[nearest] += 1;
    }
    let total = rgb.pixel_count().max(1) as f32;
    let mut v = vec![0.0f32; MOCK_EMBED_DIM];
    for (i, &n) in hist.iter().enumerate() {
        v[bucket(PALETTE[i].0)] += n as f32 / total;
    }
    v
}

fn unit(values: Vec<f32>) -> Embedding {
    normalize(&values).expect("mock vectors are non-zero and finite")
}

/// 64-dimensional hashed bag-of-words for text; colour-palette histogram for
/// images, blended with the caption of any image registered via
/// [`MockEmbedder::tag`] so captions and their swatches embed close together.
#[derive(Debug, Default)]
pub struct MockEmbedder {
    tags: RwLock<HashMap<String, String>>,
}

impl MockEmbedder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Mock with the fixture garments tagged by their captions.
    pub fn with_fixture_tags() -> Self {
        let e = Self::new();
        for g in fixtures::garments() {
            e.tag(&g.image, g.caption);
        }
        e
    }

    /// Associates `caption` with this exact image content.
    pub fn tag(&self, image: &RasterImage, caption: &str) {
        self.tags
            .write()
            .unwrap_or_else(PoisonError::into_inner)
            .insert(image_digest(image), caption.to_owned());
    }

    pub fn text_vector(text: &str) -> Embedding {
        unit(text_counts(text))
    }

    pub fn image_vector(&self, image: &RasterImage) -> Embedding {
        let palette = unit(palette_counts(image));
        let tags = self.tags.read().unwrap_or_else(PoisonError::into_inner);
        match tags.get(&image_digest(image)) {
            None => palette,
            Some(caption) => {
                let text = Self::text_vector(caption);
                let blended: Vec<f32> = text
                    .values()
                    .iter()
                    .zip(palette.values())
                    .map(|(t, p)| t + PALETTE_WEIGHT * p)
                    .collect();
                unit(blended)
            }
        }
    }
}

impl Embedder for MockEmbedder {
    fn embed_text(&self, text: &str) -> BackendResult<Embedding> {
        if text.trim().is_empty() {
            return Err(BackendError::invalid(BackendKind::Embed, "text is empty"));
        }
        reply(BackendKind::Embed, Self::text_vector(text))
    }

    fn embed_image(&self, image: &RasterImage) -> BackendResult<Embedding> {
        reply(BackendKind::Embed, self.image_vector(image))
    }
}

/// Template expansion of the instruction.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockRefiner;

impl PromptRefiner for MockRefiner {
    fn refine_prompt(&self, _image: &RasterImage, instruction: &str) -> BackendResult<String> {
        let instruction = instruction.trim();
        if instruction.is_empty() {
            return Err(BackendError::invalid(
                BackendKind::Refine,
                "instruction is empty",
            ));
        }
        reply(
            BackendKind::Refine,
            format!(
                "a garment with {instruction}, photorealistic, consistent with the person's pose"
            ),
        )
    }
}

/// Returns the registered parse map for known images and a centred default
/// body layout otherwise.
#[derive(Debug, Default)]
pub struct MockHumanParser {
    known: HashMap<String, ParseMap>,
}

impl MockHumanParser {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fixture() -> Self {
        let mut p = Self::new();
        p.register(&fixtures::person_image(), fixtures::person_parse_map());
        p
    }

    pub fn register(&mut self, image: &RasterImage, parse: ParseMap) {
        self.known.insert(image_digest(image), parse);
    }

    pub fn parse(&self, image: &RasterImage) -> ParseMap {
        match self.known.get(&image_digest(image)) {
            Some(p) if p.dims() == image.dims() => p.clone(),
            _ => BodyLayout::standard().parse_map(image.width(), image.height()),
        }
    }
}

impl HumanParser for MockHumanParser {
    fn parse_human(&self, image: &RasterImage) -> BackendResult<ParseMap> {
        reply(BackendKind::ParseHuman, self.parse(image))
    }
}

/// Maps part keywords in the instruction to regions of the parse map:
///
/// | keyword                      | region                                         |
/// |------------------------------|------------------------------------------------|
/// | sleeve, arm                  | arms                                           |
/// | cuff                         | bottom 20% of the arms bbox, within arms       |
/// | collar, neckline, neck       | top 15% of the upper-clothes bbox, within it   |
/// | hem, hemline                 | bottom 20% of the named (or worn) garment bbox |
/// | button, zipper, logo         | central band of the upper clothes              |
///
/// Anything else, or a keyword whose region is absent, is `NoRegionFound`.
#[derive(Debug)]
pub struct MockSegmenter {
    parser: Arc<MockHumanParser>,
}

impl MockSegmenter {
    pub fn new(parser: Arc<MockHumanParser>) -> Self {
        Self { parser }
    }
}

/// Rows `[from, to)` of `region`'s bounding box, expressed as fractions of
/// its height, intersected with the region.
fn band(region: &BinaryMask, from: f64, to: f64) -> BinaryMask {
    let Some(b) = bounding_box(region) else {
        return region.clone();
    };
    let h = f64::from(b.height);
    let lo = b.y + (h * from).floor() as u32;
    let hi = b.y + ((h * to).ceil() as u32).max(1);
    BinaryMask::from_fn(region.width(), region.height(), |x, y| {
        y >= lo && y < hi && region.get(x, y)
    })
}

fn central_columns(region: &BinaryMask, fraction: f64) -> BinaryMask {
    let Some(b) = bounding_box(region) else {
        return region.clone();
    };
    let w = f64::from(b.width);
    let margin = (w * (1.0 - fraction) / 2.0).floor() as u32;
    BinaryMask::from_fn(region.width(), region.height(), |x, y| {
        x >= b.x + margin && x < b.x + b.width - margin && region.get(x, y)
    })
}

fn hem_garment(parse: &ParseMap, tokens: &[String]) -> BinaryMask {
    let named = match garment_item(tokens) {
        Some(ItemKind::UpperBody) => Some(Label::UpperClothes),
        Some(ItemKind::LowerBody) => Some(Label::LowerClothes),
        Some(ItemKind::FullBody) => Some(Label::Dress),
        _ => None,
    };
    if let Some(label) = named {
        return parse.region(&[label]);
    }
    [Label::Dress, Label::LowerClothes, Label::UpperClothes]
        .into_iter()
        .map(|l| parse.region(&[l]))
        .find(|m| !m.is_empty())
        .unwrap_or_else(|| BinaryMask::empty(parse.width(), parse.height()))
}

impl Segmenter for MockSegmenter {
    fn segment(&self, query: &SegmentationQuery) -> BackendResult<BinaryMask> {
        let parse = self.parser.parse(query.image());
        let tokens = words(query.instruction());
        let has = |keys: &[&str]| tokens.iter().any(|t| keys.contains(&t.as_str()));

        let mask = if has(&["cuff", "cuffs"]) {
            band(&parse.region(&[Label::Arms]), 0.8, 1.0)
        } else if has(&["sleeve", "sleeves", "arm", "arms"]) {
            parse.region(&[Label::Arms])
        } else if has(&["collar", "collars", "neckline", "neck", "v-neck"]) {
            band(&parse.region(&[Label::UpperClothes]), 0.0, 0.15)
        } else if has(&["hem", "hemline"]) {
            band(&hem_garment(&parse, &tokens), 0.8, 1.0)
        } else if has(&["button", "buttons", "zipper", "logo"]) {
            let upper = parse.region(&[Label::UpperClothes]);
            central_columns(&band(&upper, 0.3, 0.7), 0.5)
        } else {
            BinaryMask::empty(parse.width(), parse.height())
        };
        if mask.is_empty() {
            return Err(BackendError::NoRegionFound);
        }
        reply(BackendKind::Segment, mask)
    }
}

/// Gradient silhouette: red encodes the parse label, green and blue the x
/// and y position. Background stays black.
#[derive(Debug)]
pub struct MockPoseEstimator {
    parser: Arc<MockHumanParser>,
}

impl MockPoseEstimator {
    pub fn new(parser: Arc<MockHumanParser>) -> Self {
        Self { parser }
    }
}

impl PoseEstimator for MockPoseEstimator {
    fn estimate_pose(&self, image: &RasterImage) -> BackendResult<RasterImage> {
        let parse = self.parser.parse(image);
        let (w, h) = image.dims();
        let scale = |v: u32, n: u32| (u64::from(v) * 255 / u64::from(n.max(2) - 1)) as u8;
        let pose = RasterImage::from_fn_rgb(w, h, |x, y| match parse.get(x, y) {
            Label::Background => [0, 0, 0],
            label => [label.index() * 25, scale(x, w), scale(y, h)],
        });
        reply(BackendKind::Pose, pose)
    }
}

/// Pastes the garment, stretched to the bounding box of the fill-coloured
/// pixels, into those pixels. Everything else is copied from the input.
#[derive(Debug, Clone, Copy)]
pub struct MockTryOn {
    pub fill: u8,
}

impl Default for MockTryOn {
    fn default() -> Self {
        Self { fill: DEFAULT_FILL }
    }
}

impl ImageTryOn for MockTryOn {
    fn tryon_image_based(
        &self,
        masked_person: &RasterImage,
        garment: &RasterImage,
        _seed: u64,
    ) -> BackendResult<RasterImage> {
        if masked_person.channels() != Channels::Rgb {
            return Err(BackendError::invalid(
                BackendKind::TryonImage,
                "person image must be RGB",
            ));
        }
        let fill = [self.fill; 3];
        let region = BinaryMask::from_fn(masked_person.width(), masked_person.height(), |x, y| {
            masked_person.pixel(x, y) == fill
        });
        let mut out = masked_person.clone();
        if let Some(b) = bounding_box(&region) {
            let patch = resize_nearest(&garment.to_rgb(), b.width, b.height);
            for y in b.y..b.y + b.height {
                for x in b.x..b.x + b.width {
                    if region.get(x, y) {
                        out.pixel_mut(x, y)
                            .copy_from_slice(patch.pixel(x - b.x, y - b.y));
                    }
                }
            }
        }
        reply(BackendKind::TryonImage, out)
    }
}

/// Fills the mask with a diagonal texture whose colours are keyed by
/// `hash(guidance_prompt, seed)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockEditor;

impl TextEditor for MockEditor {
    fn edit_text_based(&self, request: &EditRequest) -> BackendResult<RasterImage> {
        let key =
            splitmix64(fnv1a64(request.guidance_prompt().as_bytes()) ^ splitmix64(request.seed()));
        let base = key.to_le_bytes();
        let (a, b) = (1 + (base[3] % 5) as u32, 1 + (base[4] % 7) as u32);
        let mut out = request.masked_image().clone();
        let channels = out.channels().count();
        let mask = request.mask();
        for y in 0..out.height() {
            for x in 0..out.width() {
                if !mask.get(x, y) {
                    continue;
                }
                let ramp = ((x * a + y * b) % 48) as u8;
                let px = out.pixel_mut(x, y);
                for (c, v) in px.iter_mut().enumerate().take(channels) {
                    *v = base[c].wrapping_add(ramp);
                }
            }
        }
        reply(BackendKind::EditText, out)
    }
}

/// Wraps a generator and then overwrites every pixel of its output,
/// including those it was told to keep. Used to check that the pipeline,
/// not the generator, guarantees outside-mask preservation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Misbehaving<G>(pub G);

fn scramble(mut image: RasterImage) -> RasterImage {
    for (i, v) in image.as_bytes_mut().iter_mut().enumerate() {
        *v = (255 - *v) ^ (i as u8);
    }
    image
}

impl<G: ImageTryOn> ImageTryOn for Misbehaving<G> {
    fn tryon_image_based(
        &self,
        masked_person: &RasterImage,
        garment: &RasterImage,
        seed: u64,
    ) -> BackendResult<RasterImage> {
        self.0
            .tryon_image_based(masked_person, garment, seed)
            .map(|r| r.map(scramble))
    }
}

impl<G: TextEditor> TextEditor for Misbehaving<G> {
    fn edit_text_based(&self, request: &EditRequest) -> BackendResult<RasterImage> {
        self.0.edit_text_based(request).map(|r| r.map(scramble))
    }
}

/// Every call fails with `Unavailable` for the called kind.
#[derive(Debug, Clone, Copy, Default)]
pub struct Offline;

impl Offline {
    fn fail<T>(kind: BackendKind) -> BackendResult<T> {
        Err(BackendError::Unavailable {
            kind,
            reason: "backend offline".into(),
        })
    }
}

impl ChatModel for Offline {
    fn chat_complete(&self, _: &[ChatMessage]) -> BackendResult<String> {
        Self::fail(BackendKind::Chat)
    }
}

impl Embedder for Offline {
    fn embed_text(&self, _: &str) -> BackendResult<Embedding> {
        Self::fail(BackendKind::Embed)
    }

    fn embed_image(&self, _: &RasterImage) -> BackendResult<Embedding> {
        Self::fail(BackendKind::Embed)
    }
}

impl PromptRefiner for Offline {
    fn refine_prompt(&self, _: &RasterImage, _: &str) -> BackendResult<String> {
        Self::fail(BackendKind::Refine)
    }
}

impl Segmenter for Offline {
    fn segment(&self, _: &SegmentationQuery) -> BackendResult<BinaryMask> {
        Self::fail(BackendKind::Segment)
    }
}

impl HumanParser for Offline {
    fn parse_human(&self, _: &RasterImage) -> BackendResult<ParseMap> {
        Self::fail(BackendKind::ParseHuman)
    }
}

impl PoseEstimator for Offline {
    fn estimate_pose(&self, _: &RasterImage) -> BackendResult<RasterImage> {
        Self::fail(BackendKind::Pose)
    }
}

impl ImageTryOn for Offline {
    fn tryon_image_based(
        &self,
        _: &RasterImage,
        _: &RasterImage,
        _: u64,
    ) -> BackendResult<RasterImage> {
        Self::fail(BackendKind::TryonImage)
    }
}

impl TextEditor for Offline {
    fn edit_text_based(&self, _: &EditRequest) -> BackendResult<RasterImage> {
        Self::fail(BackendKind::EditText)
    }
}
