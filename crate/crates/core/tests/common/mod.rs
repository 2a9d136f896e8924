//! Scripted sessions on the mock stack, shared by the pipeline tests and the
//! acceptance suite.

#![allow(dead_code)]

use std::sync::Arc;

use outfitter_core::backends::mock::{Misbehaving, MockEditor, MockTryOn};
use outfitter_core::backends::Backends;
use outfitter_core::fixtures::{self, BodyLayout};
use outfitter_core::imaging::encode_png;
use outfitter_core::pipeline::Turn;
use outfitter_core::{
    BinaryMask, Orchestrator, Outcome, PipelineConfig, PromptTemplate, RasterImage, Route, Session,
};

#[derive(Debug, Clone)]
pub struct Message {
    pub text: &'static str,
    pub image: Option<RasterImage>,
    pub seed: Option<u64>,
}

fn text(text: &'static str) -> Message {
    Message {
        text,
        image: None,
        seed: None,
    }
}

fn with_person(text: &'static str) -> Message {
    Message {
        image: Some(fixtures::person_image()),
        ..self::text(text)
    }
}

#[derive(Debug, Clone)]
pub struct Script {
    pub name: &'static str,
    pub messages: Vec<Message>,
}

/// A second person photo with the default body layout at another size.
pub fn other_person() -> RasterImage {
    fixtures::render_person(&BodyLayout::standard().parse_map(72, 112))
}

pub fn scripts() -> Vec<Script> {
    vec![
        Script {
            name: "catalog_top_then_sleeves",
            messages: vec![
                with_person("change into the red floral top"),
                text("shorten the sleeves"),
            ],
        },
        Script {
            name: "unmatched_gown",
            messages: vec![with_person("change into a chartreuse hazmat gown")],
        },
        Script {
            name: "refusal_then_jeans",
            messages: vec![
                with_person("what's the weather"),
                text("change into blue jeans"),
            ],
        },
        Script {
            name: "sleeves_only",
            messages: vec![with_person("make the sleeves shorter")],
        },
        Script {
            name: "collar_recolor",
            messages: vec![with_person("recolor the collar to white")],
        },
        Script {
            name: "hem_of_trousers",
            messages: vec![with_person("shorten the hem")],
        },
        Script {
            name: "no_region_then_chinos",
            messages: vec![
                with_person("add a pocket"),
                with_person("change into khaki chinos"),
            ],
        },
        Script {
            name: "evening_dress_then_hem",
            messages: vec![
                with_person("change into a black evening dress"),
                text("make the hem longer"),
            ],
        },
        Script {
            name: "shirt_weather_skirt",
            messages: vec![
                with_person("wear a green striped shirt"),
                text("what's the weather"),
                text("put on a black pleated skirt"),
            ],
        },
        Script {
            name: "pinned_seed_text_route",
            messages: vec![Message {
                seed: Some(42),
                ..with_person("change into a purple velvet blazer")
            }],
        },
        Script {
            name: "four_step_makeover",
            messages: vec![
                with_person("change into the white cotton t-shirt"),
                text("now make the sleeves short"),
                text("change into a blue summer dress"),
                text("shorten the hem"),
            ],
        },
        Script {
            name: "other_person_upload",
            messages: vec![Message {
                image: Some(other_person()),
                ..text("change into a red top")
            }],
        },
        Script {
            name: "buttons_and_cuffs",
            messages: vec![
                with_person("make the buttons gold"),
                text("roll up the cuffs"),
            ],
        },
    ]
}

pub fn mock_backends() -> Backends {
    Backends::mock()
}

/// Mock stack whose generators overwrite every pixel they return.
pub fn misbehaving_backends() -> Backends {
    let mut b = Backends::mock();
    b.tryon = Arc::new(Misbehaving(MockTryOn::default()));
    b.edit = Arc::new(Misbehaving(MockEditor));
    b
}

pub fn orchestrator(backends: Backends) -> Orchestrator {
    let catalog = fixtures::catalog_snapshot(&*backends.embed).expect("mock embedding never fails");
    Orchestrator::new(
        PromptTemplate::builtin(),
        backends,
        catalog,
        PipelineConfig::default(),
    )
}

/// One executed step: the image it started from and what it returned.
#[derive(Debug, Clone)]
pub struct StepRun {
    pub before: Option<RasterImage>,
    pub turn: Turn,
}

#[derive(Debug, Clone)]
pub struct SessionRun {
    pub name: &'static str,
    pub steps: Vec<StepRun>,
    pub session: Session,
}

impl SessionRun {
    /// Byte serialization of everything observable: traces, replies and
    /// PNG-encoded output images.
    pub fn fingerprint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for s in &self.steps {
            out.extend(serde_json::to_vec(&s.turn.trace).expect("trace serializes"));
            out.extend(s.turn.reply.as_bytes());
            if let Some(img) = &s.turn.image {
                out.extend(encode_png(img));
            }
            if let Some(mask) = &s.turn.mask {
                out.extend(encode_png(&mask.to_gray()));
            }
        }
        out
    }
}

pub fn run_script(orch: &Orchestrator, script: &Script) -> SessionRun {
    let mut session = Session::new(format!("session-{}", script.name));
    let mut steps = Vec::new();
    for m in &script.messages {
        let before = m
            .image
            .clone()
            .map(|i| i.to_rgb())
            .or_else(|| session.current_image().cloned());
        let turn = orch
            .handle_message(&mut session, m.text, m.image.clone(), m.seed)
            .unwrap_or_else(|e| panic!("{}: `{}` failed: {e}", script.name, m.text));
        steps.push(StepRun { before, turn });
    }
    SessionRun {
        name: script.name,
        steps,
        session,
    }
}

pub fn run_all(backends: impl Fn() -> Backends) -> Vec<SessionRun> {
    scripts()
        .iter()
        .map(|s| run_script(&orchestrator(backends()), s))
        .collect()
}

/// Pixels with mask = 0 identical in both images.
pub fn preserved_outside(before: &RasterImage, after: &RasterImage, mask: &BinaryMask) -> bool {
    if before.dims() != after.dims() || before.dims() != mask.dims() {
        return false;
    }
    (0..before.height()).all(|y| {
        (0..before.width()).all(|x| mask.get(x, y) || before.pixel(x, y) == after.pixel(x, y))
    })
}

/// Checks outside-mask preservation for every Edited step; returns the
/// number of edited steps checked or a description of the first violation.
pub fn check_preservation(runs: &[SessionRun]) -> Result<usize, String> {
    let mut checked = 0;
    for run in runs {
        for (i, s) in run.steps.iter().enumerate() {
            if s.turn.trace.outcome != Outcome::Edited {
                continue;
            }
            let (Some(before), Some(after), Some(mask)) = (&s.before, &s.turn.image, &s.turn.mask)
            else {
                return Err(format!("{} step {i}: edited step without images", run.name));
            };
            if !preserved_outside(before, after, mask) {
                return Err(format!("{} step {i}: pixel outside mask changed", run.name));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// Route is ImageBased iff score ≥ τ, for every step that recorded a route.
pub fn check_routing(runs: &[SessionRun]) -> Result<(), String> {
    for run in runs {
        for s in &run.steps {
            let t = &s.turn.trace;
            let Some(route) = &t.route else { continue };
            let image_based = matches!(route, Route::ImageBased { .. });
            let expected = t.match_score.is_some_and(|m| m.value() >= t.tau);
            if image_based != expected || route.score() != t.match_score {
                return Err(format!(
                    "{} step {}: route {route:?} vs score {:?}",
                    run.name, t.step, t.match_score
                ));
            }
        }
    }
    Ok(())
}
