//! Reads the model's fixed-format reply into an [`Invocation`].
//!
//! Models are chatty: the object may be wrapped in prose or code fences, and
//! names drift in case and spacing. The parser recovers the first balanced
//! `{...}` block and normalizes names, but never guesses at content. Every
//! input yields either a value or a typed [`ParseError`].

use serde_json::{Map, Value};
use thiserror::Error;

use crate::invocation::{FunctionKind, Invocation, InvocationError, ItemKind};

/// Pseudo-function the template declares for instructions that are not
/// try-on requests.
pub const DECLINE_FUNCTION: &str = "none";

/// Keys the fixed output format must carry.
pub const REQUIRED_KEYS: [&str; 4] = ["function", "item", "details", "reply"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no balanced {{...}} block found in the response")]
    NoStructuredBlock,
    #[error("unknown function `{0}`; expected full_outfit_change, localized_editing or none")]
    UnknownFunction(String),
    #[error("unknown item `{0}`; expected upper_body, lower_body, full_body or unspecified")]
    UnknownItem(String),
    #[error("the `details` field is missing or empty")]
    MissingDetails,
    #[error("full_outfit_change requires `item` to be upper_body, lower_body or full_body")]
    ItemRequired,
    #[error("malformed block: {0}")]
    MalformedBlock(String),
}

impl From<InvocationError> for ParseError {
    fn from(e: InvocationError) -> Self {
        match e {
            InvocationError::MissingDetails => ParseError::MissingDetails,
            InvocationError::ItemRequired => ParseError::ItemRequired,
        }
    }
}

/// What the model decided for one instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Invoke(Invocation),
    /// The model declared the pseudo-function `none`.
    Decline {
        reply: String,
    },
}

/// Returns the first balanced `{...}` block. Braces inside JSON string
/// literals do not count towards balance.
pub fn extract_structured_block(raw: &str) -> Result<&str, ParseError> {
    let bytes = raw.as_bytes();
    let mut start = 0;
    while let Some(offset) = bytes[start..].iter().position(|&b| b == b'{') {
        let open = start + offset;
        if let Some(close) = matching_close(&bytes[open..]) {
            return Ok(&raw[open..open + close + 1]);
        }
        start = open + 1;
    }
    Err(ParseError::NoStructuredBlock)
}

/// Offset of the brace closing the one at `bytes[0]`.
fn matching_close(bytes: &[u8]) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn normalize_name(s: &str) -> String {
    s.trim()
        .chars()
        .map(|c| match c {
            '-' | ' ' => '_',
            c => c.to_ascii_lowercase(),
        })
        .collect()
}

fn string_field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<Option<&'a str>, ParseError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(ParseError::MalformedBlock(format!(
            "`{key}` must be a string, found {}",
            type_name(other)
        ))),
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn parse_function(name: &str) -> Result<Option<FunctionKind>, ParseError> {
    let norm = normalize_name(name);
    if norm == DECLINE_FUNCTION {
        return Ok(None);
    }
    FunctionKind::ALL
        .into_iter()
        .find(|f| f.as_str() == norm)
        .map(Some)
        .ok_or_else(|| ParseError::UnknownFunction(name.trim().to_owned()))
}

fn parse_item(name: Option<&str>) -> Result<ItemKind, ParseError> {
    let Some(name) = name else {
        return Ok(ItemKind::Unspecified);
    };
    let norm = normalize_name(name);
    if norm.is_empty() || norm == "none" {
        return Ok(ItemKind::Unspecified);
    }
    ItemKind::ALL
        .into_iter()
        .find(|i| i.as_str() == norm)
        .ok_or_else(|| ParseError::UnknownItem(name.trim().to_owned()))
}

/// Full decoding including the `none` pseudo-function.
pub fn parse_response(raw: &str) -> Result<Decision, ParseError> {
    let block = extract_structured_block(raw)?;
    let value: Value =
        serde_json::from_str(block).map_err(|e| ParseError::MalformedBlock(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(ParseError::MalformedBlock("expected an object".into()));
    };

    let function = string_field(&obj, "function")?
        .ok_or_else(|| ParseError::MalformedBlock("missing `function`".into()))?;
    let reply = string_field(&obj, "reply")?.unwrap_or_default().to_owned();
    let Some(function) = parse_function(function)? else {
        return Ok(Decision::Decline { reply });
    };
    let item = parse_item(string_field(&obj, "item")?)?;
    let details = string_field(&obj, "details")?.unwrap_or_default();
    Ok(Decision::Invoke(Invocation::new(
        function, item, details, reply,
    )?))
}

/// Decodes a try-on invocation. A `none` declaration is reported as
/// `UnknownFunction("none")`; use [`parse_response`] to handle it.
pub fn parse_invocation(raw: &str) -> Result<Invocation, ParseError> {
    match parse_response(raw)? {
        Decision::Invoke(inv) => Ok(inv),
        Decision::Decline { .. } => Err(ParseError::UnknownFunction(DECLINE_FUNCTION.into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_surrounding_prose() {
        assert_eq!(
            extract_structured_block(r#"Sure! {"function":"x"} hope that helps"#).unwrap(),
            r#"{"function":"x"}"#
        );
    }

    #[test]
    fn bare_block_is_identity() {
        assert_eq!(
            extract_structured_block(r#"{"a":{"b":1}}"#).unwrap(),
            r#"{"a":{"b":1}}"#
        );
    }

    #[test]
    fn no_braces() {
        assert_eq!(
            extract_structured_block("no braces here"),
            Err(ParseError::NoStructuredBlock)
        );
        assert_eq!(
            extract_structured_block("{ never closed"),
            Err(ParseError::NoStructuredBlock)
        );
    }

    #[test]
    fn braces_inside_strings_are_ignored() {
        let raw = r#"x {"details":"a } tricky \" { one"} tail"#;
        assert_eq!(
            extract_structured_block(raw).unwrap(),
            r#"{"details":"a } tricky \" { one"}"#
        );
    }

    #[test]
    fn unbalanced_opener_falls_through_to_next_block() {
        assert_eq!(
            extract_structured_block("{ oops {\"a\":1}").unwrap(),
            "{\"a\":1}"
        );
    }

    #[test]
    fn direct_field_mapping() {
        let inv = parse_invocation(
            r#"{"function":"full_outfit_change","item":"upper_body","details":"red floral blouse","reply":"Sure, changing your top."}"#,
        )
        .unwrap();
        assert_eq!(
            inv,
            Invocation::new(
                FunctionKind::FullOutfitChange,
                ItemKind::UpperBody,
                "red floral blouse",
                "Sure, changing your top."
            )
            .unwrap()
        );
    }

    #[test]
    fn defaulting_rules() {
        let inv = parse_invocation(
            r#"{"function":"localized_editing","details":"make the sleeves short"}"#,
        )
        .unwrap();
        assert_eq!(inv.function(), FunctionKind::LocalizedEditing);
        assert_eq!(inv.item(), ItemKind::Unspecified);
        assert_eq!(inv.details(), "make the sleeves short");
        assert_eq!(inv.reply(), "");
    }

    #[test]
    fn item_required_for_outfit_change() {
        assert_eq!(
            parse_invocation(r#"{"function":"full_outfit_change","details":"blue dress"}"#),
            Err(ParseError::ItemRequired)
        );
    }

    #[test]
    fn unknown_function_rejected() {
        assert_eq!(
            parse_invocation(r#"{"function":"teleport","item":"upper_body","details":"x"}"#),
            Err(ParseError::UnknownFunction("teleport".into()))
        );
    }

    #[test]
    fn names_are_case_and_space_insensitive() {
        let inv = parse_invocation(
            r#"{"function":"  Full Outfit-Change ","item":" UPPER_BODY","details":"x","extra":[1,2]}"#,
        )
        .unwrap();
        assert_eq!(inv.function(), FunctionKind::FullOutfitChange);
        assert_eq!(inv.item(), ItemKind::UpperBody);
    }

    #[test]
    fn missing_details_and_bad_types() {
        assert_eq!(
            parse_invocation(r#"{"function":"localized_editing","details":"   "}"#),
            Err(ParseError::MissingDetails)
        );
        assert!(matches!(
            parse_invocation(r#"{"function":"localized_editing","details":7}"#),
            Err(ParseError::MalformedBlock(_))
        ));
        assert!(matches!(
            parse_invocation(r#"{"function": oops}"#),
            Err(ParseError::MalformedBlock(_))
        ));
        assert!(matches!(
            parse_invocation(r#"{"item":"upper_body"}"#),
            Err(ParseError::MalformedBlock(_))
        ));
        assert_eq!(
            parse_invocation(r#"{"function":"localized_editing","item":"hat","details":"x"}"#),
            Err(ParseError::UnknownItem("hat".into()))
        );
    }

    #[test]
    fn decline_is_parsed_specially() {
        let raw = r#"I think {"function":"none","reply":"I can only help with outfits."}"#;
        assert_eq!(
            parse_response(raw).unwrap(),
            Decision::Decline {
                reply: "I can only help with outfits.".into()
            }
        );
        assert_eq!(
            parse_invocation(raw),
            Err(ParseError::UnknownFunction("none".into()))
        );
    }

    #[test]
    fn code_fenced_output() {
        let raw =
            "```json\n{\"function\":\"localized_editing\",\"details\":\"v-neck collar\"}\n```";
        assert_eq!(parse_invocation(raw).unwrap().details(), "v-neck collar");
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let raw = format!("{}{}", "{\"a\":".repeat(5000), "}".repeat(5000));
        assert!(parse_invocation(&raw).is_err());
    }

    proptest! {
        #[test]
        fn recovery_is_sound(prefix in "[^{}]{0,20}", suffix in ".{0,20}",
                             details in "[a-z ]{1,20}[a-z]") {
            let body = format!(r#"{{"function":"localized_editing","details":"{details}"}}"#);
            let raw = format!("{prefix}{body}{suffix}");
            if let Ok(inv) = parse_invocation(&raw) {
                let block = extract_structured_block(&raw).unwrap();
                prop_assert_eq!(parse_invocation(block).unwrap(), inv);
            }
        }

        #[test]
        fn never_panics(raw in ".{0,200}") {
            let _ = parse_response(&raw);
        }
    }
}
