//! The structured result of reading one user instruction: which try-on
//! function to run, on which garment region, with what details, plus the
//! reply shown to the user.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    FullOutfitChange,
    LocalizedEditing,
}

impl FunctionKind {
    pub const ALL: [FunctionKind; 2] = [
        FunctionKind::FullOutfitChange,
        FunctionKind::LocalizedEditing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FunctionKind::FullOutfitChange => "full_outfit_change",
            FunctionKind::LocalizedEditing => "localized_editing",
        }
    }
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    UpperBody,
    LowerBody,
    FullBody,
    Unspecified,
}

impl ItemKind {
    pub const ALL: [ItemKind; 4] = [
        ItemKind::UpperBody,
        ItemKind::LowerBody,
        ItemKind::FullBody,
        ItemKind::Unspecified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ItemKind::UpperBody => "upper_body",
            ItemKind::LowerBody => "lower_body",
            ItemKind::FullBody => "full_body",
            ItemKind::Unspecified => "unspecified",
        }
    }
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InvocationError {
    #[error("details must not be empty")]
    MissingDetails,
    #[error("full_outfit_change requires an item (upper_body, lower_body or full_body)")]
    ItemRequired,
}

/// A validated `{function, item, details}` triple plus the reply text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Invocation {
    function: FunctionKind,
    item: ItemKind,
    details: String,
    reply: String,
}

impl Invocation {
    /// `details` is trimmed; `reply` is kept verbatim.
    pub fn new(
        function: FunctionKind,
        item: ItemKind,
        details: impl Into<String>,
        reply: impl Into<String>,
    ) -> Result<Self, InvocationError> {
        let details = details.into().trim().to_owned();
        if details.is_empty() {
            return Err(InvocationError::MissingDetails);
        }
        if function == FunctionKind::FullOutfitChange && item == ItemKind::Unspecified {
            return Err(InvocationError::ItemRequired);
        }
        Ok(Self {
            function,
            item,
            details,
            reply: reply.into(),
        })
    }

    pub fn function(&self) -> FunctionKind {
        self.function
    }

    pub fn item(&self) -> ItemKind {
        self.item
    }

    pub fn details(&self) -> &str {
        &self.details
    }

    pub fn reply(&self) -> &str {
        &self.reply
    }

    /// Canonical wire form: `{"function", "item", "details", "reply"}` in that
    /// key order.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("invocation serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants_enforced() {
        assert_eq!(
            Invocation::new(
                FunctionKind::LocalizedEditing,
                ItemKind::Unspecified,
                "  ",
                ""
            ),
            Err(InvocationError::MissingDetails)
        );
        assert_eq!(
            Invocation::new(
                FunctionKind::FullOutfitChange,
                ItemKind::Unspecified,
                "x",
                ""
            ),
            Err(InvocationError::ItemRequired)
        );
        let inv = Invocation::new(
            FunctionKind::LocalizedEditing,
            ItemKind::Unspecified,
            " short sleeves ",
            "ok",
        )
        .unwrap();
        assert_eq!(inv.details(), "short sleeves");
    }

    #[test]
    fn canonical_key_order() {
        let inv = Invocation::new(
            FunctionKind::FullOutfitChange,
            ItemKind::UpperBody,
            "red top",
            "Sure.",
        )
        .unwrap();
        assert_eq!(
            inv.to_canonical_json(),
            r#"{"function":"full_outfit_change","item":"upper_body","details":"red top","reply":"Sure."}"#
        );
    }
}
